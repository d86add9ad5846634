#include "lrgnn/data.hpp"
#include "lrgnn/errors.hpp"
#include "lrgnn/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lrgnn {

using nlohmann::json;

namespace {

json matrix_rows(const Tensor &t) {
  json rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = t.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

json flat_matrix(const Tensor &t) { return json{{"shape", t.shape()}, {"values", t.values()}}; }

json task_json(const TaskDescriptor &t) {
  json j{{"kind", to_string(t.task)}, {"geometric", t.geometric}};
  if (t.task == Task::GraphClassification) {
    j["num_classes"] = t.num_classes;
  }
  if (!t.name.empty()) {
    j["name"] = t.name;
  }
  return j;
}

json graph_json(const Sample &s) {
  const AtomGraph &g = s.graph;
  json edges = json::array();
  for (const Edge &e : g.edges) {
    edges.push_back({e.u, e.v});
  }
  json j{{"n", g.node_count},
         {"edges", edges},
         {"x", matrix_rows(g.node_features)},
         {"x_dim", g.node_features.cols()},
         {"e", matrix_rows(g.edge_features)},
         {"e_dim", g.edge_features.cols()}};
  if (g.positions) {
    j["pos"] = matrix_rows(*g.positions);
  }
  if (!g.atomic_numbers.empty()) {
    j["z"] = g.atomic_numbers;
  }
  if (!g.graph_targets.empty()) {
    j["y_graph"] = g.graph_targets;
  }
  if (g.node_targets) {
    j["y_node"] = matrix_rows(*g.node_targets);
    j["y_node_dim"] = g.node_targets->cols();
  }
  if (g.cutoff) {
    j["cutoff"] = *g.cutoff;
  }
  if (s.encodings) {
    const EncodingBundle &b = *s.encodings;
    j["enc"] = {{"C", flat_matrix(b.C)}, {"P", flat_matrix(b.P)}, {"G", flat_matrix(b.G)},
                {"L", flat_matrix(b.L)}, {"invalid", b.invalid_reasons}};
  }
  return j;
}

class RecordReader {
public:
  RecordReader(const json &record, std::string line) : rec_(record), line_(std::move(line)) {}

  [[noreturn]] void fail(const std::string &path, const std::string &what) const {
    throw SchemaError(line_ + ", field " + path, what);
  }

  const json *find(const char *key) const {
    auto it = rec_.find(key);
    return it == rec_.end() ? nullptr : &*it;
  }

  const json &need(const char *key) const {
    const json *j = find(key);
    if (j == nullptr) {
      fail(key, "missing");
    }
    return *j;
  }

  std::size_t count(const json &j, const std::string &path) const {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
      fail(path, "expected a non-negative integer");
    }
    return j.get<std::size_t>();
  }

  double number(const json &j, const std::string &path) const {
    if (!j.is_number()) {
      fail(path, "expected a number");
    }
    return j.get<double>();
  }

  Tensor rows(const json &j, const std::string &path, std::size_t expected_rows,
              std::optional<std::size_t> width) const {
    if (!j.is_array()) {
      fail(path, "expected an array of rows");
    }
    if (j.size() != expected_rows) {
      fail(path, "expected " + std::to_string(expected_rows) + " rows, found " +
                     std::to_string(j.size()));
    }
    std::size_t cols = width.value_or(j.empty() ? 0 : j.front().size());
    Tensor t = Tensor::matrix(expected_rows, cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
      const std::string rp = path + "[" + std::to_string(r) + "]";
      if (!j[r].is_array() || j[r].size() != cols) {
        fail(rp, "expected a row of " + std::to_string(cols) + " numbers");
      }
      for (std::size_t c = 0; c < cols; ++c) {
        t(r, c) = number(j[r][c], rp + "[" + std::to_string(c) + "]");
      }
    }
    return t;
  }

  Tensor flat(const json &j, const std::string &path) const {
    if (!j.is_object() || !j.contains("shape") || !j.contains("values")) {
      fail(path, "expected {shape, values}");
    }
    std::vector<std::size_t> shape;
    for (std::size_t i = 0; i < j["shape"].size(); ++i) {
      shape.push_back(count(j["shape"][i], path + ".shape[" + std::to_string(i) + "]"));
    }
    const json &vals = j["values"];
    const std::size_t expected =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    if (!vals.is_array() || vals.size() != expected) {
      fail(path + ".values", "expected " + std::to_string(expected) + " numbers");
    }
    std::vector<double> v(expected);
    for (std::size_t i = 0; i < expected; ++i) {
      // Non-finite entries are written as null.
      v[i] = vals[i].is_null() ? std::nan("") : number(vals[i], path + ".values");
    }
    return Tensor(std::move(shape), std::move(v));
  }

  const std::string &line() const { return line_; }

private:
  const json &rec_;
  std::string line_;
};

Sample parse_record(const json &rec, const std::string &line, const TaskDescriptor &task) {
  if (!rec.is_object()) {
    throw SchemaError(line, "record must be an object");
  }
  static const std::set<std::string> known{"n", "edges", "x", "x_dim", "e", "e_dim", "pos",
                                           "z", "y_graph", "y_node", "y_node_dim", "cutoff",
                                           "enc"};
  for (const auto &[k, v] : rec.items()) {
    if (!known.count(k)) {
      throw SchemaError(line + ", field " + k, "unknown field");
    }
  }
  RecordReader r(rec, line);
  Sample s;
  AtomGraph &g = s.graph;
  g.node_count = r.count(r.need("n"), "n");
  const json &edges = r.need("edges");
  if (!edges.is_array()) {
    r.fail("edges", "expected an array of [u, v] pairs");
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string p = "edges[" + std::to_string(i) + "]";
    if (!edges[i].is_array() || edges[i].size() != 2) {
      r.fail(p, "expected [u, v]");
    }
    const std::size_t u = r.count(edges[i][0], p + "[0]"), v = r.count(edges[i][1], p + "[1]");
    if (u >= g.node_count || v >= g.node_count) {
      r.fail(p, "endpoint out of range for n = " + std::to_string(g.node_count));
    }
    g.edges.push_back({u, v});
  }
  std::optional<std::size_t> x_dim, e_dim;
  if (const json *d = r.find("x_dim")) {
    x_dim = r.count(*d, "x_dim");
  }
  if (const json *d = r.find("e_dim")) {
    e_dim = r.count(*d, "e_dim");
  }
  g.node_features = r.rows(r.need("x"), "x", g.node_count, x_dim);
  g.edge_features = r.rows(r.need("e"), "e", g.edges.size(), e_dim);
  if (const json *p = r.find("pos")) {
    g.positions = r.rows(*p, "pos", g.node_count, 3);
  } else if (task.geometric) {
    r.fail("pos", "required by the geometric task descriptor");
  }
  if (const json *z = r.find("z")) {
    if (!z->is_array()) {
      r.fail("z", "expected an array of atomic numbers");
    }
    for (std::size_t i = 0; i < z->size(); ++i) {
      if (!(*z)[i].is_number_integer()) {
        r.fail("z[" + std::to_string(i) + "]", "expected an integer");
      }
      g.atomic_numbers.push_back((*z)[i].get<int>());
    }
  }
  if (const json *y = r.find("y_graph")) {
    if (!y->is_array()) {
      r.fail("y_graph", "expected an array of numbers");
    }
    for (std::size_t i = 0; i < y->size(); ++i) {
      g.graph_targets.push_back(r.number((*y)[i], "y_graph[" + std::to_string(i) + "]"));
    }
  }
  if (const json *y = r.find("y_node")) {
    std::optional<std::size_t> w;
    if (const json *d = r.find("y_node_dim")) {
      w = r.count(*d, "y_node_dim");
    }
    g.node_targets = r.rows(*y, "y_node", g.node_count, w);
  }
  if (const json *c = r.find("cutoff")) {
    g.cutoff = r.number(*c, "cutoff");
  }
  if (const json *enc = r.find("enc")) {
    EncodingBundle b;
    if (!enc->is_object()) {
      r.fail("enc", "expected an object");
    }
    for (const char *key : {"C", "P", "G", "L"}) {
      if (!enc->contains(key)) {
        r.fail(std::string("enc.") + key, "missing");
      }
    }
    b.C = r.flat((*enc)["C"], "enc.C");
    b.P = r.flat((*enc)["P"], "enc.P");
    b.G = r.flat((*enc)["G"], "enc.G");
    b.L = r.flat((*enc)["L"], "enc.L");
    if (enc->contains("invalid")) {
      b.invalid_reasons = (*enc)["invalid"].get<std::vector<std::string>>();
    }
    if (b.C.rows() != g.node_count || b.P.rows() != g.node_count || b.L.rows() != g.node_count ||
        b.G.rows() != g.edges.size()) {
      r.fail("enc", "channel row counts do not match the graph");
    }
    s.encodings = std::move(b);
  }
  try {
    g.validate();
  } catch (const std::invalid_argument &e) {
    throw SchemaError(line, e.what());
  }
  if (task.task == Task::NodeRegression && !g.node_targets) {
    r.fail("y_node", "required by the node-regression task descriptor");
  }
  return s;
}

TaskDescriptor parse_task_descriptor(const json &j, const std::string &where) {
  TaskDescriptor t;
  if (!j.is_object()) {
    throw SchemaError(where, "expected an object");
  }
  try {
    t.task = parse_task(j.value("kind", std::string("graph-regression")));
    t.geometric = j.value("geometric", false);
    t.num_classes = j.value("num_classes", std::size_t{0});
    t.name = j.value("name", std::string{});
  } catch (const json::exception &e) {
    throw SchemaError(where, e.what());
  } catch (const ConfigError &e) {
    throw SchemaError(where + ".kind", e.what());
  }
  return t;
}

} // namespace

void write_graphs(const Dataset &dataset, std::ostream &out) {
  out << json{{"format", "lrgnn-graphs"}, {"version", 1}, {"task", task_json(dataset.task)}}.dump()
      << '\n';
  for (const Sample &s : dataset.samples) {
    out << graph_json(s).dump() << '\n';
  }
}

Dataset parse_graphs(std::istream &in, const std::string &source) {
  Dataset d;
  std::string text;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, text)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    if (text.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error &e) {
      throw SchemaError(where, std::string("malformed line: ") + e.what());
    }
    if (!header) {
      if (!j.is_object() || j.value("format", std::string{}) != "lrgnn-graphs") {
        throw SchemaError(where, "expected the lrgnn-graphs header");
      }
      if (j.value("version", 0) != 1) {
        throw SchemaError(where + ", field version", "unsupported schema version");
      }
      d.task = parse_task_descriptor(j.value("task", json::object()), where + ", field task");
      header = true;
      continue;
    }
    d.samples.push_back(parse_record(j, where, d.task));
  }
  return d;
}

Dataset load_graphs(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  return parse_graphs(in, path.string());
}

void save_graphs(const Dataset &dataset, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  write_graphs(dataset, out);
}

std::optional<std::size_t> lpe_dim_for(const std::string &dataset_name) {
  static const std::map<std::string, std::size_t> dims{
      {"qm9", 2}, {"zinc", 5}, {"tmqm", 6}, {"niaid", 6}, {"pcqm", 4}, {"ppa", 5}, {"pcba", 5}};
  std::string key = dataset_name;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const auto &[name, dim] : dims) {
    if (key.find(name) != std::string::npos) {
      return dim;
    }
  }
  return std::nullopt;
}

SplitAssignment split(std::size_t n, std::span<const double> fractions, std::uint64_t seed) {
  if (n < 3) {
    throw std::invalid_argument("split: need at least 3 graphs, got " + std::to_string(n));
  }
  if (fractions.size() != 3) {
    throw std::invalid_argument("split: expected three fractions");
  }
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) {
      throw std::invalid_argument("split: fractions must be non-negative");
    }
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  // The tolerance absorbs products such as 0.7 * 10 = 6.9999999999999991.
  const auto size_of = [n](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  const std::size_t ntrain = size_of(fractions[0]);
  const std::size_t nval = std::min(size_of(fractions[1]), n - ntrain);
  SplitAssignment s;
  s.train.assign(order.begin(), order.begin() + ntrain);
  s.val.assign(order.begin() + ntrain, order.begin() + ntrain + nval);
  s.test.assign(order.begin() + ntrain + nval, order.end());
  return s;
}

SplitAssignment split(std::size_t n, std::uint64_t seed) {
  const double f[] = {0.8, 0.1, 0.1};
  return split(n, f, seed);
}

std::vector<Sample> select(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    out.push_back(samples[i]);
  }
  return out;
}

EncodeReport encode_dataset(Dataset &dataset, const ElementTable &table,
                            const EncoderOptions &options, std::size_t workers) {
  const std::size_t n = dataset.samples.size();
  std::vector<EncodingBundle> bundles(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        bundles[i] = encode_graph(dataset.samples[i].graph, table, options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < std::max<std::size_t>(workers, 1); ++w) {
    threads.emplace_back(work);
  }
  work();
  for (auto &t : threads) {
    t.join();
  }
  EncodeReport report;
  report.input_count = n;
  std::vector<Sample> kept;
  kept.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception &e) {
        throw std::invalid_argument("graph " + std::to_string(i) + ": " + e.what());
      }
    }
    const Verdict v = validate_encodings(bundles[i]);
    if (!v.keep) {
      report.discarded.push_back({i, v.reason});
      continue;
    }
    Sample s = std::move(dataset.samples[i]);
    s.encodings = std::move(bundles[i]);
    kept.push_back(std::move(s));
  }
  dataset.samples = std::move(kept);
  return report;
}

std::string format_discard_report(const EncodeReport &report) {
  std::ostringstream out;
  out << "input " << report.input_count << '\n';
  out << "kept " << report.input_count - report.discarded.size() << '\n';
  out << "discarded " << report.discarded.size() << '\n';
  std::map<std::string, std::size_t> by_reason;
  for (const Discard &d : report.discarded) {
    ++by_reason[d.reason];
  }
  for (const auto &[reason, count] : by_reason) {
    out << "reason " << count << ' ' << reason << '\n';
  }
  for (const Discard &d : report.discarded) {
    out << "graph " << d.index << ' ' << d.reason << '\n';
  }
  return out.str();
}

ChannelStats standardize_channels(std::vector<Sample> &samples, std::span<const std::size_t> train) {
  std::vector<const EncodingBundle *> bundles;
  for (std::size_t i : train) {
    if (!samples.at(i).encodings) {
      throw std::invalid_argument("standardize_channels: graph " + std::to_string(i) +
                                  " has no encodings");
    }
    bundles.push_back(&*samples[i].encodings);
  }
  const ChannelStats stats = fit_channel_stats(bundles);
  for (Sample &s : samples) {
    if (s.encodings) {
      s.encodings = apply_channel_stats(*s.encodings, stats);
    }
  }
  return stats;
}

void SyntheticLriConfig::validate() const {
  if (graphs == 0) {
    throw ConfigError("synthetic LRI: graph count must be positive");
  }
  if (min_atoms < 2 || min_atoms > max_atoms) {
    throw ConfigError("synthetic LRI: need 2 <= min_atoms <= max_atoms");
  }
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) {
    throw ConfigError("synthetic LRI: cutoff must be positive");
  }
  if (!(c6 > 0.0) || !std::isfinite(c6)) {
    throw ConfigError("synthetic LRI: C6 must be positive");
  }
  if (!(box > 0.0) || std::sqrt(3.0) * box < cutoff) {
    throw ConfigError("synthetic LRI: no long-range pairs (box diagonal " +
                      std::to_string(std::sqrt(3.0) * box) + " is below the cutoff " +
                      std::to_string(cutoff) + ")");
  }
}

double lri_target(const Tensor &positions, double cutoff, double c6) {
  double y = 0.0;
  for (std::size_t i = 0; i < positions.rows(); ++i) {
    for (std::size_t j = i + 1; j < positions.rows(); ++j) {
      const auto a = positions.row(i), b = positions.row(j);
      const double r = std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
      if (r >= cutoff) {
        y -= c6 / std::pow(r, 6);
      }
    }
  }
  return y;
}

bool is_connected(std::size_t node_count, std::span<const Edge> edges) {
  if (node_count == 0) {
    return true;
  }
  const auto adj = adjacency(node_count, edges);
  std::vector<bool> seen(node_count, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  return reached == node_count;
}

Dataset gen_synthetic_lri(const SyntheticLriConfig &config) {
  config.validate();
  Dataset d;
  d.task = TaskDescriptor{Task::GraphRegression, true, 0, "synthetic-lri"};
  Rng rng(config.seed);
  for (std::size_t gi = 0; gi < config.graphs; ++gi) {
    const std::size_t n =
        config.min_atoms + uniform_index(rng, config.max_atoms - config.min_atoms + 1);
    Tensor pos = Tensor::matrix(n, 3);
    RadiusEdges re;
    std::size_t attempt = 0;
    for (;; ++attempt) {
      if (attempt == config.max_attempts) {
        throw ConfigError("synthetic LRI: no connected placement of " + std::to_string(n) +
                          " atoms after " + std::to_string(config.max_attempts) +
                          " attempts; enlarge the cutoff or shrink the box");
      }
      for (double &v : pos.values()) {
        v = uniform(rng, 0.0, config.box);
      }
      re = build_radius_graph(pos, config.cutoff);
      if (!config.require_connected || is_connected(n, re.edges)) {
        break;
      }
    }
    Sample s;
    AtomGraph &g = s.graph;
    g.node_count = n;
    g.edges = re.edges;
    g.node_features = Tensor::matrix(n, 1, 1.0);
    g.edge_features = Tensor::matrix(re.edges.size(), 1);
    for (std::size_t e = 0; e < re.edges.size(); ++e) {
      g.edge_features(e, 0) = re.distances[e];
    }
    g.positions = pos;
    g.atomic_numbers.assign(n, 18);
    g.graph_targets = {lri_target(pos, config.cutoff, config.c6)};
    g.cutoff = config.cutoff;
    d.samples.push_back(std::move(s));
  }
  return d;
}

} // namespace lrgnn
