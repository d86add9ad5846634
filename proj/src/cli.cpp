#include "lrgnn/cli.hpp"
#include "lrgnn/data.hpp"
#include "lrgnn/errors.hpp"
#include "lrgnn/hpo.hpp"
#include "lrgnn/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace lrgnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char *kExitCodeHelp = R"(Exit codes:
  0  success
  1  internal error
  2  usage error (unknown subcommand or flag, missing argument)
  3  configuration error (unreadable or invalid config file)
  4  schema error (an input file violates its format)
  5  data error (too few graphs, missing channels, unreadable input)
  6  training error (non-finite loss, every trial failed))";

// Seed streams derived from the single --seed value.
enum Stream : std::uint64_t { kSplit = 0, kInit = 1, kTrain = 2, kSearch = 3, kGenerate = 4 };

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  bool lpe_dim_given = false;
  TrainConfig train;
  std::optional<SearchSpace> space;
  std::size_t budget = 10;
  EncoderOptions encoders;
  SyntheticLriConfig lri;
  std::string data_name;
  std::vector<double> fractions{0.8, 0.1, 0.1};
};

RunConfig load_config(const std::optional<std::string> &path) {
  RunConfig rc;
  if (!path) {
    rc.encoders.lpe_dim = rc.model.lpe_dim;
    return rc;
  }
  std::ifstream in(*path);
  if (!in) {
    throw ConfigError("cannot read config file " + *path);
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw ConfigError(*path + ": " + e.what());
  }
  if (!j.is_object()) {
    throw ConfigError(*path + ": top level must be an object");
  }
  static const std::set<std::string> known{"seed",     "model", "train", "space", "hpo",
                                           "encoders", "lri",   "data"};
  for (const auto &[k, v] : j.items()) {
    if (!known.count(k)) {
      throw ConfigError(*path + ": unknown section '" + k + "'");
    }
  }
  try {
    rc.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("model")) {
      rc.model = j["model"].get<ModelConfig>();
      rc.lpe_dim_given = j["model"].contains("lpe_dim");
    }
    if (j.contains("train")) {
      rc.train = j["train"].get<TrainConfig>();
    }
    if (j.contains("space")) {
      rc.space = j["space"].get<SearchSpace>();
    }
    if (j.contains("hpo")) {
      rc.budget = j["hpo"].value("budget", rc.budget);
    }
    if (j.contains("data")) {
      rc.data_name = j["data"].value("name", std::string{});
      rc.fractions = j["data"].value("fractions", rc.fractions);
    }
    if (j.contains("encoders")) {
      const json &e = j["encoders"];
      const std::string kind = e.value("laplacian", std::string("combinatorial"));
      if (kind == "combinatorial") {
        rc.encoders.laplacian = LaplacianKind::Combinatorial;
      } else if (kind == "normalized") {
        rc.encoders.laplacian = LaplacianKind::SymmetricNormalized;
      } else {
        throw ConfigError("encoders.laplacian must be 'combinatorial' or 'normalized'");
      }
      rc.encoders.degeneracy_gap = e.value("degeneracy_gap", rc.encoders.degeneracy_gap);
      rc.encoders.chemical = e.value("chemical", rc.encoders.chemical);
    }
    if (j.contains("lri")) {
      const json &l = j["lri"];
      rc.lri.graphs = l.value("graphs", rc.lri.graphs);
      rc.lri.min_atoms = l.value("min_atoms", rc.lri.min_atoms);
      rc.lri.max_atoms = l.value("max_atoms", rc.lri.max_atoms);
      rc.lri.box = l.value("box", rc.lri.box);
      rc.lri.cutoff = l.value("cutoff", rc.lri.cutoff);
      rc.lri.c6 = l.value("c6", rc.lri.c6);
      rc.lri.require_connected = l.value("require_connected", rc.lri.require_connected);
    }
  } catch (const json::exception &e) {
    throw ConfigError(*path + ": " + e.what());
  }
  if (!rc.lpe_dim_given && !rc.data_name.empty()) {
    if (auto d = lpe_dim_for(rc.data_name)) {
      rc.model.lpe_dim = *d;
    }
  }
  rc.encoders.lpe_dim = rc.model.lpe_dim;
  return rc;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

class Run {
public:
  Run(std::string command, std::optional<std::string> config, std::uint64_t seed, fs::path out)
      : command_(std::move(command)), config_(std::move(config)), seed_(seed), out_(std::move(out)),
        started_(utc_now()) {
    fs::create_directories(out_);
  }

  const fs::path &out() const { return out_; }

  fs::path artifact(const std::string &name) {
    artifacts_.push_back(name);
    const fs::path p = out_ / name;
    if (p.has_parent_path()) {
      fs::create_directories(p.parent_path());
    }
    return p;
  }

  void write_text(const std::string &name, const std::string &text) {
    std::ofstream f(artifact(name));
    f << text;
  }

  // Written last; its presence marks a completed run.
  void finish() {
    std::sort(artifacts_.begin(), artifacts_.end());
    artifacts_.erase(std::unique(artifacts_.begin(), artifacts_.end()), artifacts_.end());
    json m{{"command", command_},
           {"config", config_ ? json(*config_) : json(nullptr)},
           {"seed", seed_},
           {"out", out_.string()},
           {"started", started_},
           {"finished", utc_now()},
           {"artifacts", artifacts_}};
    std::ofstream f(out_ / "manifest.json");
    f << m.dump(2) << '\n';
  }

private:
  std::string command_;
  std::optional<std::string> config_;
  std::uint64_t seed_;
  fs::path out_;
  std::string started_;
  std::vector<std::string> artifacts_;
};

// Graph-derived model fields follow the data.
void fit_model_to_data(ModelConfig &m, const Dataset &d) {
  if (d.samples.empty()) {
    throw std::invalid_argument("dataset is empty");
  }
  const AtomGraph &g = d.samples.front().graph;
  m.node_feature_dim = g.node_feature_dim();
  m.edge_feature_dim = g.edge_feature_dim();
  m.task = d.task.task;
  if (d.task.task == Task::GraphClassification) {
    m.num_classes = d.task.num_classes;
  } else if (d.task.task == Task::NodeRegression) {
    m.output_dim = g.node_targets ? g.node_targets->cols() : m.output_dim;
  } else {
    m.output_dim = g.graph_targets.size();
  }
  if (d.samples.front().encodings) {
    m.lpe_dim = d.samples.front().encodings->L.cols();
  }
}

bool needs_encodings(const ModelConfig &m) { return m.attention || m.encodings; }

struct Prepared {
  std::vector<Sample> train, val, test;
  SplitAssignment split;
  ChannelStats stats;
  bool standardized = false;
};

// Encodes when required and missing, splits, and standardizes channels on
// the training split.
Prepared prepare(Dataset &data, RunConfig &rc, Run &run, std::size_t workers, bool any_encodings) {
  const bool all_encoded = std::all_of(data.samples.begin(), data.samples.end(),
                                       [](const Sample &s) { return s.encodings.has_value(); });
  if (any_encodings && !all_encoded) {
    rc.encoders.lpe_dim = rc.model.lpe_dim;
    const EncodeReport rep = encode_dataset(data, ElementTable::builtin(), rc.encoders, workers);
    run.write_text("discard_report.txt", format_discard_report(rep));
  }
  fit_model_to_data(rc.model, data);
  Prepared p;
  p.split = split(data.samples.size(), rc.fractions, mix_seed(rc.seed, kSplit));
  std::vector<Sample> all = data.samples;
  const bool encoded = std::all_of(all.begin(), all.end(),
                                   [](const Sample &s) { return s.encodings.has_value(); });
  if (encoded) {
    p.stats = standardize_channels(all, p.split.train);
    p.standardized = true;
  }
  p.train = select(all, p.split.train);
  p.val = select(all, p.split.val);
  p.test = select(all, p.split.test);
  if (p.train.empty() || p.val.empty()) {
    throw std::invalid_argument("split left the training or validation set empty");
  }
  json s{{"train", p.split.train}, {"val", p.split.val}, {"test", p.split.test}};
  run.write_text("split.json", s.dump() + "\n");
  return p;
}

json stats_json(const ChannelStats &s) {
  auto col = [](const ColumnStats &c) { return json{{"mean", c.mean}, {"std", c.std}}; };
  return json{{"C", col(s.C)}, {"P", col(s.P)}, {"G", col(s.G)}, {"L", col(s.L)}};
}

ChannelStats stats_from_json(const json &j) {
  auto col = [](const json &c) {
    return ColumnStats{c.at("mean").get<std::vector<double>>(), c.at("std").get<std::vector<double>>()};
  };
  return ChannelStats{col(j.at("C")), col(j.at("P")), col(j.at("G")), col(j.at("L"))};
}

std::string loss_trace_csv(const TrainResult &r) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t i = 0; i < r.train_loss.size(); ++i) {
    out << i + 1 << ',' << format_double(r.train_loss[i]) << ',' << format_double(r.val_loss[i])
        << '\n';
  }
  return out.str();
}

void write_evaluation(Run &run, const Model &model, std::span<const Sample> data, std::size_t chunk) {
  const Evaluation ev = evaluate(model, data, chunk);
  write_metrics(run.artifact("metrics.txt"), ev.metrics);
  write_parity(run.artifact("parity.csv"), ev.truth, ev.predicted);
}

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string out = "run";
};

void add_common(CLI::App *cmd, Common &c) {
  cmd->add_option("--config", c.config, "Configuration file (JSON)");
  cmd->add_option("--seed", c.seed, "Seed for every random draw; overrides the config");
  cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output directory");
}

RunConfig resolve(const Common &c) {
  RunConfig rc = load_config(c.config);
  if (c.seed) {
    rc.seed = *c.seed;
  }
  rc.train.validate();
  return rc;
}

int cmd_encode(const Common &c, const std::string &data_path) {
  RunConfig rc = resolve(c);
  Run run("encode", c.config, rc.seed, c.out);
  Dataset d = load_graphs(data_path);
  const EncodeReport rep = encode_dataset(d, ElementTable::builtin(), rc.encoders, c.workers);
  save_graphs(d, run.artifact("encoded.jsonl"));
  run.write_text("discard_report.txt", format_discard_report(rep));
  run.finish();
  return kExitOk;
}

int cmd_train(const Common &c, const std::string &data_path) {
  RunConfig rc = resolve(c);
  Run run("train", c.config, rc.seed, c.out);
  Dataset d = load_graphs(data_path);
  Prepared p = prepare(d, rc, run, c.workers, needs_encodings(rc.model));
  Model model = Model::assemble(rc.model, mix_seed(rc.seed, kInit));
  TrainConfig tc = rc.train;
  tc.seed = mix_seed(rc.seed, kTrain);
  tc.workers = c.workers;
  TrainHooks hooks;
  hooks.checkpoint_dir = run.out() / "checkpoints";
  const TrainResult r = train(model, p.train, p.val, tc, hooks);
  run.artifact("checkpoints/checkpoint.json");
  run.artifact("checkpoints/best_model.json");
  model.save(run.artifact("model.json"));
  if (p.standardized) {
    run.write_text("channel_stats.json", stats_json(p.stats).dump() + "\n");
  }
  run.write_text("loss_trace.csv", loss_trace_csv(r));
  write_evaluation(run, model, p.test.empty() ? p.val : p.test, tc.batch_size);
  run.finish();
  return kExitOk;
}

int cmd_hpo(const Common &c, const std::string &data_path, std::optional<std::size_t> budget) {
  RunConfig rc = resolve(c);
  Run run("hpo", c.config, rc.seed, c.out);
  const SearchSpace space =
      rc.space.value_or(SearchSpace::standard(rc.model.has_pos, rc.model.attention, rc.model.encodings));
  Dataset d = load_graphs(data_path);
  ModelConfig base = rc.model;
  base.attention = space.attention;
  base.encodings = space.encodings;
  base.has_pos = space.has_pos;
  base.heads = space.attention ? space.heads.front() : 0;
  rc.model = base;
  Prepared p = prepare(d, rc, run, c.workers, needs_encodings(base));
  HpoSettings hs;
  hs.budget = budget.value_or(rc.budget);
  hs.seed = mix_seed(rc.seed, kSearch);
  hs.workers = c.workers;
  hs.train = rc.train;
  hs.out_dir = run.out();
  HpoResult res = run_hpo(space, rc.model, hs, p.train, p.val, p.test);
  run.artifact("trials.jsonl");
  for (const TrialRecord &t : res.trials) {
    if (!t.checkpoint.empty()) {
      run.artifact(t.checkpoint);
    }
  }
  run.artifact("final/checkpoint.json");
  run.artifact("final/best_model.json");
  run.write_text("best_config.json",
                 json{{"trial", res.trials[res.best].index}, {"config", res.trials[res.best].config}}
                         .dump(2) +
                     "\n");
  res.final_model.save(run.artifact("model.json"));
  if (p.standardized) {
    run.write_text("channel_stats.json", stats_json(p.stats).dump() + "\n");
  }
  run.write_text("loss_trace.csv", loss_trace_csv(res.final_train));
  write_evaluation(run, res.final_model, p.test.empty() ? p.val : p.test, rc.train.batch_size);
  run.finish();
  return kExitOk;
}

int cmd_eval(const Common &c, const std::string &data_path, const std::string &model_path,
             const std::optional<std::string> &stats_path) {
  RunConfig rc = resolve(c);
  Run run("eval", c.config, rc.seed, c.out);
  const Model model = Model::load(model_path);
  Dataset d = load_graphs(data_path);
  const bool all_encoded = std::all_of(d.samples.begin(), d.samples.end(),
                                       [](const Sample &s) { return s.encodings.has_value(); });
  if (needs_encodings(model.config()) && !all_encoded) {
    rc.encoders.lpe_dim = model.config().lpe_dim;
    const EncodeReport rep = encode_dataset(d, ElementTable::builtin(), rc.encoders, c.workers);
    run.write_text("discard_report.txt", format_discard_report(rep));
  }
  if (stats_path) {
    std::ifstream in(*stats_path);
    if (!in) {
      throw std::runtime_error("cannot read " + *stats_path);
    }
    json j;
    try {
      in >> j;
      const ChannelStats stats = stats_from_json(j);
      for (Sample &s : d.samples) {
        if (s.encodings) {
          s.encodings = apply_channel_stats(*s.encodings, stats);
        }
      }
    } catch (const json::exception &e) {
      throw SchemaError(*stats_path, e.what());
    }
  }
  write_evaluation(run, model, d.samples, rc.train.batch_size);
  run.finish();
  return kExitOk;
}

int cmd_gen_lri(const Common &c) {
  RunConfig rc = resolve(c);
  Run run("gen-lri", c.config, rc.seed, c.out);
  SyntheticLriConfig g = rc.lri;
  g.seed = mix_seed(rc.seed, kGenerate);
  save_graphs(gen_synthetic_lri(g), run.artifact("lri.jsonl"));
  run.finish();
  return kExitOk;
}

std::string read_file(const fs::path &p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cmd_report(const Common &c, const std::string &run_dir) {
  RunConfig rc = resolve(c);
  const fs::path dir(run_dir);
  if (!fs::exists(dir / "manifest.json")) {
    throw std::runtime_error(run_dir + " has no manifest.json (incomplete or not a run directory)");
  }
  json manifest;
  try {
    std::ifstream in(dir / "manifest.json");
    in >> manifest;
  } catch (const json::exception &e) {
    throw SchemaError((dir / "manifest.json").string(), e.what());
  }
  Run run("report", c.config, rc.seed, c.out);
  std::ostringstream s;
  s << "Run summary\n===========\n\n";
  s << "command: " << manifest.value("command", std::string("?")) << '\n';
  s << "seed: " << manifest.value("seed", std::uint64_t{0}) << '\n';
  s << "started: " << manifest.value("started", std::string("?")) << '\n';
  s << "finished: " << manifest.value("finished", std::string("?")) << "\n\n";
  if (fs::exists(dir / "model.json")) {
    const Model m = Model::load(dir / "model.json");
    const ModelConfig &mc = m.config();
    s << "scheme: " << to_string(mc.scheme()) << " (attention " << (mc.attention ? "on" : "off")
      << ", encodings " << (mc.encodings ? "on" : "off") << ")\n";
    s << "mpnn_kind: " << to_string(mc.mpnn_kind) << '\n';
    s << "num_conv_layers: " << mc.num_conv_layers << '\n';
    s << "hidden_dim: " << mc.hidden_dim << '\n';
    s << "edge_embed_dim: " << mc.edge_embed_dim << '\n';
    s << "global_attn_heads: " << mc.heads << '\n';
    s << "parameters: " << m.count_parameters() << "\n\n";
  }
  if (fs::exists(dir / "metrics.txt")) {
    s << "Metrics\n-------\n" << read_file(dir / "metrics.txt") << '\n';
  }
  if (fs::exists(dir / "loss_trace.csv")) {
    std::ifstream in(dir / "loss_trace.csv");
    std::string line;
    std::size_t epochs = 0;
    std::string last;
    std::getline(in, line);
    while (std::getline(in, line)) {
      ++epochs;
      last = line;
    }
    s << "Training\n--------\nepochs: " << epochs << "\nlast (epoch,train,val): " << last << "\n\n";
  }
  if (fs::exists(dir / "trials.jsonl")) {
    const auto trials = read_trial_store(dir / "trials.jsonl");
    s << "Trials\n------\n";
    for (const TrialRecord &t : trials) {
      s << "trial " << t.index << ": ";
      if (t.failed) {
        s << "failed (" << t.failure << ")\n";
      } else {
        s << "val_loss " << format_double(t.val_loss) << ", parameters " << t.parameter_count
          << ", " << to_string(t.config.mpnn_kind) << " K=" << t.config.num_conv_layers
          << " d_h=" << t.config.hidden_dim << " heads=" << t.config.heads << '\n';
      }
    }
    s << "selected: trial " << trials[select_best(trials)].index << "\n\n";
  }
  run.write_text("summary.txt", s.str());
  if (fs::exists(dir / "parity.csv")) {
    run.write_text("parity.csv", read_file(dir / "parity.csv"));
  }
  run.finish();
  return kExitOk;
}

} // namespace

int run_command(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Atomistic graph neural networks with switchable encoders and global attention",
               "lrgnn"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);
  Common common;
  std::string data_path, model_path, run_dir;
  std::optional<std::string> stats_path;
  std::optional<std::size_t> budget;

  auto *encode = app.add_subcommand("encode", "Attach encodings and write a discard report");
  add_common(encode, common);
  encode->add_option("--data", data_path, "Graph file")->required();

  auto *train_cmd = app.add_subcommand("train", "Train one configuration");
  add_common(train_cmd, common);
  train_cmd->add_option("--data", data_path, "Graph file")->required();

  auto *hpo = app.add_subcommand("hpo", "Random search, selection and retraining");
  add_common(hpo, common);
  hpo->add_option("--data", data_path, "Graph file")->required();
  hpo->add_option("--budget", budget, "Number of trials; overrides the config");

  auto *eval = app.add_subcommand("eval", "Evaluate a saved model on a graph file");
  add_common(eval, common);
  eval->add_option("--data", data_path, "Graph file")->required();
  eval->add_option("--model", model_path, "Model file")->required();
  eval->add_option("--stats", stats_path, "Channel statistics written by train or hpo");

  auto *gen = app.add_subcommand("gen-lri", "Generate the synthetic long-range dataset");
  add_common(gen, common);

  auto *report = app.add_subcommand("report", "Summarize a run directory");
  add_common(report, common);
  report->add_option("--run", run_dir, "Run directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp &e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp &e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError &e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (encode->parsed()) {
      return cmd_encode(common, data_path);
    }
    if (train_cmd->parsed()) {
      return cmd_train(common, data_path);
    }
    if (hpo->parsed()) {
      return cmd_hpo(common, data_path, budget);
    }
    if (eval->parsed()) {
      return cmd_eval(common, data_path, model_path, stats_path);
    }
    if (gen->parsed()) {
      return cmd_gen_lri(common);
    }
    if (report->parsed()) {
      return cmd_report(common, run_dir);
    }
  } catch (const SchemaError &e) {
    err << "schema error: " << e.what() << '\n';
    return kExitSchema;
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TrainingError &e) {
    err << "training error: " << e.what() << '\n';
    return kExitTraining;
  } catch (const std::invalid_argument &e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::runtime_error &e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception &e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  err << "no subcommand\n";
  return kExitUsage;
}

} // namespace lrgnn
