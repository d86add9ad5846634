#include "lrgnn/hpo.hpp"
#include "lrgnn/errors.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lrgnn {

using nlohmann::json;

namespace {

std::vector<std::size_t> inclusive(std::size_t lo, std::size_t hi, std::size_t step = 1) {
  std::vector<std::size_t> out;
  for (std::size_t v = lo; v <= hi; v += step) {
    out.push_back(v);
  }
  return out;
}

bool contains(const std::vector<std::size_t> &grid, std::size_t v) {
  return std::find(grid.begin(), grid.end(), v) != grid.end();
}

} // namespace

SearchSpace SearchSpace::standard(bool has_pos, bool attention, bool encodings) {
  SearchSpace s;
  s.has_pos = has_pos;
  s.attention = attention;
  s.encodings = encodings;
  s.kinds = admissible_kinds(has_pos);
  if (!attention) {
    s.num_conv_layers = inclusive(1, 6);
    s.heads = {0};
    s.hidden_dim = encodings ? inclusive(16, 64) : inclusive(4, 32);
    s.edge_embed_dim = encodings ? std::vector<std::size_t>{0, 4, 5, 6, 7, 8, 9, 10, 11, 12}
                                 : std::vector<std::size_t>{0};
  } else {
    s.num_conv_layers = inclusive(1, 3);
    s.heads = {2, 4, 8};
    s.hidden_dim = encodings ? inclusive(16, 64, 8) : inclusive(8, 48, 8);
    // 7 is absent from the attention-on, encodings-off grid as published.
    s.edge_embed_dim = encodings ? std::vector<std::size_t>{0, 4, 5, 6, 7, 8, 9, 10, 11, 12}
                                 : std::vector<std::size_t>{0, 4, 5, 6, 8, 9, 10, 11, 12};
  }
  return s;
}

void SearchSpace::validate() const {
  if (kinds.empty() || num_conv_layers.empty() || heads.empty() || hidden_dim.empty() ||
      edge_embed_dim.empty()) {
    throw ConfigError("search space: every grid must be non-empty");
  }
  const auto ok = admissible_kinds(has_pos);
  for (MpnnKind k : kinds) {
    if (std::find(ok.begin(), ok.end(), k) == ok.end()) {
      throw ConfigError("search space: mpnn kind '" + to_string(k) +
                        "' is not admissible with has_pos = " + (has_pos ? "true" : "false"));
    }
  }
  for (std::size_t h : heads) {
    if (!attention && h != 0) {
      throw ConfigError("search space: global attention is off, so global_attn_heads must be {0}");
    }
    if (attention && h == 0) {
      throw ConfigError("search space: global attention is on, so global_attn_heads must be positive");
    }
  }
  for (std::size_t v : num_conv_layers) {
    if (v == 0) {
      throw ConfigError("search space: num_conv_layers values must be positive");
    }
  }
  for (std::size_t v : hidden_dim) {
    if (v == 0) {
      throw ConfigError("search space: hidden_dim values must be positive");
    }
  }
  if (feasible_count() == 0) {
    throw ConfigError("search space: no hidden_dim is divisible by any global_attn_heads value");
  }
}

std::string SearchSpace::violation(const ModelConfig &c) const {
  if (c.has_pos != has_pos || c.attention != attention || c.encodings != encodings) {
    return "branch flags differ from the space";
  }
  if (std::find(kinds.begin(), kinds.end(), c.mpnn_kind) == kinds.end()) {
    return "mpnn_kind outside the admissible set";
  }
  if (!contains(num_conv_layers, c.num_conv_layers)) {
    return "num_conv_layers outside its grid";
  }
  if (!contains(heads, c.heads)) {
    return "global_attn_heads outside its grid";
  }
  if (!contains(hidden_dim, c.hidden_dim)) {
    return "hidden_dim outside its grid";
  }
  if (!contains(edge_embed_dim, c.edge_embed_dim)) {
    return "edge_embed_dim outside its grid";
  }
  if (c.heads > 0 && c.hidden_dim % c.heads != 0) {
    return "hidden_dim / global_attn_heads must be an integer";
  }
  if (!attention && c.heads != 0) {
    return "global_attn_heads must be 0 with attention off";
  }
  return {};
}

std::size_t SearchSpace::feasible_count() const {
  std::size_t pairs = 0;
  for (std::size_t h : heads) {
    for (std::size_t d : hidden_dim) {
      pairs += (h == 0 || d % h == 0) ? 1 : 0;
    }
  }
  return pairs * kinds.size() * num_conv_layers.size() * edge_embed_dim.size();
}

void to_json(json &j, const SearchSpace &s) {
  std::vector<std::string> kinds;
  for (MpnnKind k : s.kinds) {
    kinds.push_back(to_string(k));
  }
  j = json{{"has_pos", s.has_pos},
           {"global_attn_engine", s.attention},
           {"use_encodings", s.encodings},
           {"mpnn_kind", kinds},
           {"num_conv_layers", s.num_conv_layers},
           {"global_attn_heads", s.heads},
           {"hidden_dim", s.hidden_dim},
           {"edge_embed_dim", s.edge_embed_dim}};
}

namespace {

std::vector<std::size_t> grid(const json &j, const std::string &key) {
  try {
    if (j.is_object()) {
      const auto r = j.at("range").get<std::vector<std::size_t>>();
      if (r.size() != 2 || r[0] > r[1]) {
        throw ConfigError("search space field '" + key + "': range must be [lo, hi] with lo <= hi");
      }
      return inclusive(r[0], r[1]);
    }
    return j.get<std::vector<std::size_t>>();
  } catch (const json::exception &e) {
    throw ConfigError("search space field '" + key + "': " + e.what());
  }
}

} // namespace

void from_json(const json &j, SearchSpace &s) {
  if (!j.is_object()) {
    throw ConfigError("search space must be an object");
  }
  static const std::set<std::string> known{"has_pos",         "global_attn_engine", "use_encodings",
                                           "mpnn_kind",       "num_conv_layers",    "global_attn_heads",
                                           "hidden_dim",      "edge_embed_dim"};
  for (const auto &[k, v] : j.items()) {
    if (!known.count(k)) {
      throw ConfigError("search space: unknown field '" + k + "'");
    }
  }
  const bool has_pos = j.value("has_pos", false);
  const bool attention = j.value("global_attn_engine", false);
  const bool encodings = j.value("use_encodings", false);
  SearchSpace out = SearchSpace::standard(has_pos, attention, encodings);
  if (j.contains("mpnn_kind")) {
    out.kinds.clear();
    for (const auto &k : j["mpnn_kind"]) {
      out.kinds.push_back(parse_mpnn_kind(k.get<std::string>()));
    }
  }
  if (j.contains("num_conv_layers")) {
    out.num_conv_layers = grid(j["num_conv_layers"], "num_conv_layers");
  }
  if (j.contains("global_attn_heads")) {
    out.heads = grid(j["global_attn_heads"], "global_attn_heads");
  }
  if (j.contains("hidden_dim")) {
    out.hidden_dim = grid(j["hidden_dim"], "hidden_dim");
  }
  if (j.contains("edge_embed_dim")) {
    out.edge_embed_dim = grid(j["edge_embed_dim"], "edge_embed_dim");
  }
  out.validate();
  s = std::move(out);
}

ModelConfig sample_config(const SearchSpace &space, const ModelConfig &base, Rng &rng) {
  space.validate();
  ModelConfig c = base;
  c.has_pos = space.has_pos;
  c.attention = space.attention;
  c.encodings = space.encodings;
  auto pick = [&rng](const std::vector<std::size_t> &g) { return g[uniform_index(rng, g.size())]; };
  for (;;) {
    c.mpnn_kind = space.kinds[uniform_index(rng, space.kinds.size())];
    c.num_conv_layers = pick(space.num_conv_layers);
    c.heads = pick(space.heads);
    c.hidden_dim = pick(space.hidden_dim);
    c.edge_embed_dim = pick(space.edge_embed_dim);
    if (c.heads == 0 || c.hidden_dim % c.heads == 0) {
      return c;
    }
  }
}

namespace {

json metrics_json(const Metrics &m) {
  json j{{"count", m.count}};
  if (m.mse) {
    j["mse"] = *m.mse;
  }
  if (m.mae) {
    j["mae"] = *m.mae;
  }
  if (m.pearson) {
    j["pearson_r"] = *m.pearson;
    j["pearson_degenerate"] = m.pearson_degenerate;
  }
  if (m.accuracy) {
    j["accuracy"] = *m.accuracy;
  }
  return j;
}

Metrics metrics_from_json(const json &j) {
  Metrics m;
  m.count = j.value("count", std::size_t{0});
  if (j.contains("mse")) {
    m.mse = j["mse"].get<double>();
  }
  if (j.contains("mae")) {
    m.mae = j["mae"].get<double>();
  }
  if (j.contains("pearson_r")) {
    m.pearson = j["pearson_r"].get<double>();
    m.pearson_degenerate = j.value("pearson_degenerate", false);
  }
  if (j.contains("accuracy")) {
    m.accuracy = j["accuracy"].get<double>();
  }
  return m;
}

} // namespace

json trial_to_json(const TrialRecord &t) {
  json j{{"trial", t.index},       {"seed", t.seed},
         {"config", t.config},     {"status", t.failed ? "failed" : "ok"},
         {"parameters", t.parameter_count}};
  if (t.failed) {
    j["failure"] = t.failure;
  } else {
    j["val_loss"] = t.val_loss;
    j["test"] = metrics_json(t.test);
  }
  if (!t.checkpoint.empty()) {
    j["checkpoint"] = t.checkpoint;
  }
  return j;
}

TrialRecord trial_from_json(const json &j) {
  TrialRecord t;
  t.index = j.at("trial").get<std::size_t>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.config = j.at("config").get<ModelConfig>();
  t.failed = j.at("status").get<std::string>() == "failed";
  t.parameter_count = j.value("parameters", std::size_t{0});
  if (t.failed) {
    t.failure = j.value("failure", std::string{});
  } else {
    t.val_loss = j.at("val_loss").get<double>();
    t.test = metrics_from_json(j.value("test", json::object()));
  }
  t.checkpoint = j.value("checkpoint", std::string{});
  return t;
}

void write_trial_store(const std::filesystem::path &path, std::span<const TrialRecord> trials) {
  std::vector<const TrialRecord *> ordered;
  for (const TrialRecord &t : trials) {
    ordered.push_back(&t);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const TrialRecord *a, const TrialRecord *b) { return a->index < b->index; });
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  for (const TrialRecord *t : ordered) {
    out << trial_to_json(*t).dump() << '\n';
  }
}

std::vector<TrialRecord> read_trial_store(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  std::vector<TrialRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) {
      continue;
    }
    try {
      out.push_back(trial_from_json(json::parse(line)));
    } catch (const json::exception &e) {
      throw SchemaError(path.string() + ":" + std::to_string(n), e.what());
    } catch (const ConfigError &e) {
      throw SchemaError(path.string() + ":" + std::to_string(n) + ", field config", e.what());
    }
  }
  return out;
}

std::size_t select_best(std::span<const TrialRecord> trials) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const TrialRecord &t = trials[i];
    if (t.failed) {
      continue;
    }
    if (!best || t.val_loss < trials[*best].val_loss ||
        (t.val_loss == trials[*best].val_loss && t.index < trials[*best].index)) {
      best = i;
    }
  }
  if (!best) {
    std::ostringstream msg;
    msg << "all " << trials.size() << " trials failed";
    for (const TrialRecord &t : trials) {
      msg << "; trial " << t.index << ": " << t.failure;
    }
    throw TrainingError(msg.str());
  }
  return *best;
}

namespace {

TrialRecord run_trial(std::size_t index, std::uint64_t seed, const ModelConfig &config,
                      const HpoSettings &settings, std::span<const Sample> train_set,
                      std::span<const Sample> val_set, std::span<const Sample> test_set) {
  TrialRecord t;
  t.index = index;
  t.seed = seed;
  t.config = config;
  try {
    Model model = Model::assemble(config, seed);
    t.parameter_count = model.count_parameters();
    TrainConfig tc = settings.train;
    tc.epochs = tc.hpo_epochs;
    tc.patience = std::min(tc.patience, tc.hpo_epochs);
    tc.seed = mix_seed(seed, 1);
    tc.workers = 1;
    const TrainResult r = train(model, train_set, val_set, tc);
    t.val_loss = r.best_val;
    if (!test_set.empty()) {
      t.test = evaluate(model, test_set, tc.batch_size).metrics;
    }
    if (settings.out_dir) {
      const auto dir = *settings.out_dir / "trials";
      std::filesystem::create_directories(dir);
      const auto file = dir / ("trial_" + std::to_string(index) + ".json");
      model.save(file);
      t.checkpoint = std::filesystem::relative(file, *settings.out_dir).string();
    }
  } catch (const std::exception &e) {
    t.failed = true;
    t.failure = e.what();
  }
  return t;
}

} // namespace

HpoResult run_hpo(const SearchSpace &space, const ModelConfig &base, const HpoSettings &settings,
                  std::span<const Sample> train_set, std::span<const Sample> val_set,
                  std::span<const Sample> test_set) {
  if (settings.budget == 0) {
    throw ConfigError("hpo budget must be at least 1");
  }
  space.validate();
  settings.train.validate_search();
  Rng rng(settings.seed);
  std::vector<ModelConfig> configs;
  for (std::size_t i = 0; i < settings.budget; ++i) {
    configs.push_back(sample_config(space, base, rng));
  }

  HpoResult result;
  result.trials.resize(settings.budget);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < settings.budget; i = next++) {
      result.trials[i] = run_trial(i, mix_seed(settings.seed, i), configs[i], settings, train_set,
                                   val_set, test_set);
    }
  };
  std::vector<std::thread> threads;
  const std::size_t workers = std::clamp<std::size_t>(settings.workers, 1, settings.budget);
  for (std::size_t w = 1; w < workers; ++w) {
    threads.emplace_back(work);
  }
  work();
  for (auto &t : threads) {
    t.join();
  }
  if (settings.out_dir) {
    std::filesystem::create_directories(*settings.out_dir);
    write_trial_store(*settings.out_dir / "trials.jsonl", result.trials);
  }

  result.best = select_best(result.trials);
  const TrialRecord &best = result.trials[result.best];
  result.final_model = Model::assemble(best.config, best.seed);
  TrainConfig tc = settings.train;
  tc.seed = mix_seed(best.seed, 2);
  TrainHooks hooks;
  if (settings.out_dir) {
    hooks.checkpoint_dir = *settings.out_dir / "final";
  }
  result.final_train = train(result.final_model, train_set, val_set, tc, hooks);
  if (!test_set.empty()) {
    result.final_test = evaluate(result.final_model, test_set, tc.batch_size).metrics;
  }
  return result;
}

} // namespace lrgnn
