#include "lrgnn/model.hpp"
#include "lrgnn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace lrgnn {

using nlohmann::json;

std::string to_string(Task t) {
  switch (t) {
  case Task::GraphRegression:
    return "graph-regression";
  case Task::NodeRegression:
    return "node-regression";
  case Task::GraphClassification:
    return "graph-classification";
  }
  return "?";
}

Task parse_task(const std::string &s) {
  for (Task t : {Task::GraphRegression, Task::NodeRegression, Task::GraphClassification}) {
    if (to_string(t) == s) {
      return t;
    }
  }
  throw ConfigError("unknown task '" + s + "'");
}

std::string to_string(Scheme s) { return "S" + std::to_string(static_cast<int>(s)); }

std::vector<MpnnKind> admissible_kinds(bool has_pos) {
  if (has_pos) {
    return {MpnnKind::EdgeConditionedSum, MpnnKind::MultiAggregator, MpnnKind::Geometric};
  }
  return {MpnnKind::EdgeConditionedSum, MpnnKind::MultiAggregator};
}

Scheme ModelConfig::scheme() const {
  if (attention) {
    return encodings ? Scheme::S4 : Scheme::S3;
  }
  return encodings ? Scheme::S2 : Scheme::S1;
}

void ModelConfig::validate() const {
  if (num_conv_layers == 0) {
    throw ConfigError("num_conv_layers must be at least 1");
  }
  if (hidden_dim == 0) {
    throw ConfigError("hidden_dim must be at least 1");
  }
  if (node_feature_dim == 0) {
    throw ConfigError("node_feature_dim must be at least 1");
  }
  if (attention && heads == 0) {
    throw ConfigError("global attention is on, so global_attn_heads must be positive");
  }
  if (!attention && heads != 0) {
    throw ConfigError("global attention is off, so global_attn_heads must be 0 (got " +
                      std::to_string(heads) + ")");
  }
  if (heads > 0 && hidden_dim % heads != 0) {
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " / global_attn_heads " +
                      std::to_string(heads) + " must be an integer");
  }
  const auto kinds = admissible_kinds(has_pos);
  if (std::find(kinds.begin(), kinds.end(), mpnn_kind) == kinds.end()) {
    throw ConfigError("mpnn_kind '" + to_string(mpnn_kind) + "' is not admissible with has_pos = " +
                      (has_pos ? "true" : "false"));
  }
  if ((attention || encodings) && lpe_dim == 0) {
    throw ConfigError("lpe_dim must be positive when attention or encodings are on");
  }
  if (task == Task::GraphClassification && num_classes < 2) {
    throw ConfigError("graph-classification needs num_classes >= 2");
  }
  if (task != Task::GraphClassification && output_dim == 0) {
    throw ConfigError("output_dim must be at least 1");
  }
  if (mpnn_kind == MpnnKind::Geometric && (radial.count < 2 || !(radial.cutoff > 0.0))) {
    throw ConfigError("geometric layers need radial_basis.count >= 2 and a positive cutoff");
  }
}

EmbedderConfig ModelConfig::embedder_config() const {
  EmbedderConfig e;
  e.use_encodings = encodings;
  e.use_attention = attention;
  e.hidden_dim = hidden_dim;
  e.edge_dim = edge_embed_dim;
  e.node_feature_dim = node_feature_dim;
  e.edge_feature_dim = edge_feature_dim;
  e.lpe_dim = lpe_dim;
  return e;
}

Aggregator ModelConfig::effective_aggregator() const {
  return aggregator.value_or(default_aggregator(mpnn_kind));
}

std::size_t ModelConfig::head_width() const {
  return task == Task::GraphClassification ? num_classes : output_dim;
}

std::set<Channel> ModelConfig::consumed_channels() const {
  const EmbedderConfig e = embedder_config();
  std::set<Channel> out;
  for (Channel c : e.node_channels()) {
    out.insert(c);
  }
  if (edge_feature_dim > 0) {
    out.insert(Channel::E);
  }
  if (edge_embed_dim > 0) {
    if (e.edge_mode() == EdgeMode::Topological) {
      out.insert(Channel::G);
    } else if (e.edge_mode() == EdgeMode::Spectral) {
      out.insert(Channel::L);
    }
  }
  if (mpnn_kind == MpnnKind::Geometric) {
    out.insert(Channel::Positions);
  }
  return out;
}

void to_json(json &j, const ModelConfig &c) {
  j = json{{"attention", c.attention},
           {"encodings", c.encodings},
           {"mpnn_kind", to_string(c.mpnn_kind)},
           {"num_conv_layers", c.num_conv_layers},
           {"hidden_dim", c.hidden_dim},
           {"edge_embed_dim", c.edge_embed_dim},
           {"global_attn_heads", c.heads},
           {"pooling", to_string(c.pooling)},
           {"task", to_string(c.task)},
           {"num_classes", c.num_classes},
           {"output_dim", c.output_dim},
           {"has_pos", c.has_pos},
           {"node_feature_dim", c.node_feature_dim},
           {"edge_feature_dim", c.edge_feature_dim},
           {"lpe_dim", c.lpe_dim},
           {"radial_basis", {{"count", c.radial.count}, {"cutoff", c.radial.cutoff}}},
           {"angular_basis", {{"enabled", c.angular.enabled}, {"order", c.angular.order}}}};
  if (c.aggregator) {
    j["aggregator"] = to_string(*c.aggregator);
  }
}

namespace {

template <typename T> T field(const json &j, const char *key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) {
    return fallback;
  }
  try {
    return it->get<T>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("model config field '") + key + "': " + e.what());
  }
}

} // namespace

void from_json(const json &j, ModelConfig &c) {
  static const std::set<std::string> known{
      "attention",   "encodings",     "mpnn_kind",        "aggregator",       "num_conv_layers",
      "hidden_dim",  "edge_embed_dim", "global_attn_heads", "pooling",          "task",
      "num_classes", "output_dim",    "has_pos",          "node_feature_dim", "edge_feature_dim",
      "lpe_dim",     "radial_basis",  "angular_basis"};
  if (!j.is_object()) {
    throw ConfigError("model config must be an object");
  }
  for (const auto &[k, v] : j.items()) {
    if (!known.count(k)) {
      throw ConfigError("model config: unknown field '" + k + "'");
    }
  }
  ModelConfig d;
  c.attention = field(j, "attention", d.attention);
  c.encodings = field(j, "encodings", d.encodings);
  c.mpnn_kind = parse_mpnn_kind(field<std::string>(j, "mpnn_kind", to_string(d.mpnn_kind)));
  c.aggregator.reset();
  if (j.contains("aggregator")) {
    c.aggregator = parse_aggregator(field<std::string>(j, "aggregator", ""));
  }
  c.num_conv_layers = field(j, "num_conv_layers", d.num_conv_layers);
  c.hidden_dim = field(j, "hidden_dim", d.hidden_dim);
  c.edge_embed_dim = field(j, "edge_embed_dim", d.edge_embed_dim);
  c.heads = field(j, "global_attn_heads", d.heads);
  c.pooling = parse_pool_mode(field<std::string>(j, "pooling", to_string(d.pooling)));
  c.task = parse_task(field<std::string>(j, "task", to_string(d.task)));
  c.num_classes = field(j, "num_classes", d.num_classes);
  c.output_dim = field(j, "output_dim", d.output_dim);
  c.has_pos = field(j, "has_pos", d.has_pos);
  c.node_feature_dim = field(j, "node_feature_dim", d.node_feature_dim);
  c.edge_feature_dim = field(j, "edge_feature_dim", d.edge_feature_dim);
  c.lpe_dim = field(j, "lpe_dim", d.lpe_dim);
  c.radial = d.radial;
  if (auto it = j.find("radial_basis"); it != j.end()) {
    c.radial.count = field(*it, "count", d.radial.count);
    c.radial.cutoff = field(*it, "cutoff", d.radial.cutoff);
  }
  c.angular = d.angular;
  if (auto it = j.find("angular_basis"); it != j.end()) {
    c.angular.enabled = field(*it, "enabled", d.angular.enabled);
    c.angular.order = field(*it, "order", d.angular.order);
  }
}

const Tensor &ModelInput::read(Channel c, Scheme scheme) const {
  auto it = channels.find(c);
  if (it == channels.end()) {
    throw std::invalid_argument("scheme " + to_string(scheme) + " requires channel " +
                                to_string(c) + ", which the batch does not carry");
  }
  reads.insert(c);
  return it->second;
}

std::size_t ModelInput::target_rows(Task task) const {
  return task == Task::NodeRegression ? node_count : num_graphs;
}

namespace {

Tensor stack_rows(const std::vector<const Tensor *> &parts, std::size_t cols) {
  std::size_t rows = 0;
  for (const Tensor *t : parts) {
    rows += t->rows();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t r = 0;
  for (const Tensor *t : parts) {
    if (t->rows() > 0 && t->cols() != cols) {
      throw std::invalid_argument("make_input: inconsistent channel widths across graphs");
    }
    std::copy(t->values().begin(), t->values().end(), out.values().begin() + r * cols);
    r += t->rows();
  }
  return out;
}

} // namespace

ModelInput make_input(std::span<const Sample *const> samples, const ModelConfig &config) {
  if (samples.empty()) {
    throw std::invalid_argument("make_input: empty batch");
  }
  std::vector<const AtomGraph *> graphs;
  graphs.reserve(samples.size());
  bool all_enc = true, all_pos = true, all_node_targets = true;
  for (const Sample *s : samples) {
    graphs.push_back(&s->graph);
    all_enc = all_enc && s->encodings.has_value();
    all_pos = all_pos && s->graph.positions.has_value();
    all_node_targets = all_node_targets && s->graph.node_targets.has_value();
  }
  BatchedGraph b = batch(std::span<const AtomGraph *const>(graphs));

  ModelInput in;
  in.num_graphs = b.num_graphs();
  in.node_count = b.merged.node_count;
  in.messages = MessageGraph::build(b.merged.node_count, b.merged.edges);
  in.graph_index = make_index(b.graph_index);
  in.offsets = std::make_shared<const std::vector<std::size_t>>(b.node_offsets);
  std::vector<std::size_t> eu, ev;
  eu.reserve(b.merged.edges.size());
  ev.reserve(b.merged.edges.size());
  for (const Edge &e : b.merged.edges) {
    eu.push_back(e.u);
    ev.push_back(e.v);
  }
  in.edge_u = make_index(std::move(eu));
  in.edge_v = make_index(std::move(ev));
  in.channels[Channel::X] = b.merged.node_features;
  in.channels[Channel::E] = b.merged.edge_features;
  if (all_pos) {
    in.channels[Channel::Positions] = *b.merged.positions;
  }
  if (all_enc) {
    std::vector<const Tensor *> c, p, g, l;
    for (const Sample *s : samples) {
      c.push_back(&s->encodings->C);
      p.push_back(&s->encodings->P);
      g.push_back(&s->encodings->G);
      l.push_back(&s->encodings->L);
    }
    const EncodingBundle &first = *samples.front()->encodings;
    in.channels[Channel::C] = stack_rows(c, first.C.cols());
    in.channels[Channel::P] = stack_rows(p, first.P.cols());
    in.channels[Channel::G] = stack_rows(g, kEdgeTopologyWidth);
    in.channels[Channel::L] = stack_rows(l, first.L.cols());
  }
  if (config.mpnn_kind == MpnnKind::Geometric && all_pos) {
    in.geometry = geometric_basis(*b.merged.positions, in.messages, config.radial, config.angular);
  }
  in.graph_targets = b.graph_targets;
  if (all_node_targets) {
    std::vector<const Tensor *> t;
    for (const Sample *s : samples) {
      t.push_back(&*s->graph.node_targets);
    }
    in.node_targets = stack_rows(t, samples.front()->graph.node_targets->cols());
  }
  return in;
}

ModelInput make_input(std::span<const Sample> samples, const ModelConfig &config) {
  std::vector<const Sample *> ptrs;
  ptrs.reserve(samples.size());
  for (const Sample &s : samples) {
    ptrs.push_back(&s);
  }
  return make_input(std::span<const Sample *const>(ptrs), config);
}

Model Model::assemble(const ModelConfig &config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  Rng rng(seed);
  const EmbedderConfig ec = config.embedder_config();
  m.embedder_ = Embedder::create(m.params_, ec, rng);
  const std::size_t edge_dim = ec.edge_out_dim();
  const Aggregator agg = config.effective_aggregator();
  if (config.attention) {
    for (std::size_t k = 0; k < config.num_conv_layers; ++k) {
      m.gps_.push_back(GpsBlock::create(m.params_, "gps" + std::to_string(k), config.mpnn_kind, agg,
                                        config.hidden_dim, edge_dim, config.heads, config.radial,
                                        config.angular, rng));
    }
  } else {
    std::size_t in_dim = ec.node_out_dim();
    for (std::size_t k = 0; k < config.num_conv_layers; ++k) {
      m.mpnn_.push_back(MpnnLayer::create(m.params_, "mpnn" + std::to_string(k), config.mpnn_kind,
                                          agg, in_dim, config.hidden_dim, edge_dim, config.radial,
                                          config.angular, rng));
      in_dim = config.hidden_dim;
    }
  }
  m.w_head_ = m.params_.add_weight("head.w", config.hidden_dim, config.head_width(), rng);
  m.b_head_ = m.params_.add_bias("head.b", config.head_width());
  return m;
}

Model::Trace Model::forward(Tape &tape, const ModelInput &input) const {
  const Scheme scheme = config_.scheme();
  const EmbedderConfig &ec = embedder_.config;

  NodeChannels nodes;
  for (Channel c : ec.node_channels()) {
    Var v = tape.constant(input.read(c, scheme));
    switch (c) {
    case Channel::X:
      nodes.X = v;
      break;
    case Channel::L:
      nodes.L = v;
      break;
    case Channel::P:
      nodes.P = v;
      break;
    case Channel::C:
      nodes.C = v;
      break;
    default:
      break;
    }
  }
  EdgeChannels edges;
  edges.edge_u = input.edge_u;
  edges.edge_v = input.edge_v;
  if (ec.edge_feature_dim > 0) {
    edges.E = tape.constant(input.read(Channel::E, scheme));
  }
  if (ec.edge_dim > 0) {
    if (ec.edge_mode() == EdgeMode::Topological) {
      edges.G = tape.constant(input.read(Channel::G, scheme));
    } else if (ec.edge_mode() == EdgeMode::Spectral) {
      edges.L = nodes.L.valid() ? nodes.L : tape.constant(input.read(Channel::L, scheme));
    }
  }

  Trace trace;
  Var h = embed_nodes(tape, params_, embedder_, nodes);
  Var e = embed_edges(tape, params_, embedder_, edges);
  trace.node_states.push_back(h);

  const GeometricBasis *basis = nullptr;
  if (config_.mpnn_kind == MpnnKind::Geometric) {
    input.read(Channel::Positions, scheme);
    if (!input.geometry) {
      throw std::invalid_argument("scheme " + to_string(scheme) +
                                  " with geometric layers requires a geometric basis");
    }
    basis = &*input.geometry;
  }

  if (config_.attention) {
    for (const GpsBlock &block : gps_) {
      GpsOutput out = gps_block(tape, params_, block, h, e, input.messages, basis, input.offsets);
      h = out.x;
      e = out.e;
      trace.node_states.push_back(h);
    }
  } else {
    for (const MpnnLayer &layer : mpnn_) {
      h = mpnn_forward(tape, params_, layer, h, e, input.messages, basis);
      trace.node_states.push_back(h);
    }
  }

  Var readout = h;
  if (config_.task != Task::NodeRegression) {
    readout = pool(h, input.graph_index, input.num_graphs, config_.pooling);
  }
  trace.output = add_row(matmul(readout, params_.bind(tape, w_head_)), params_.bind(tape, b_head_));
  return trace;
}

Tensor Model::predict(const ModelInput &input) const {
  Tape tape;
  return forward(tape, input).output.value();
}

std::vector<int> class_labels(const Tensor &graph_targets, std::size_t num_classes) {
  std::vector<int> labels(graph_targets.rows());
  for (std::size_t g = 0; g < graph_targets.rows(); ++g) {
    const double y = graph_targets(g, 0);
    if (y != std::floor(y) || y < 0.0 || y >= static_cast<double>(num_classes)) {
      throw std::invalid_argument("graph " + std::to_string(g) + ": class label " +
                                  std::to_string(y) + " is not an integer in [0, " +
                                  std::to_string(num_classes) + ")");
    }
    labels[g] = static_cast<int>(y);
  }
  return labels;
}

Var Model::loss(Tape &tape, const ModelInput &input) const {
  return loss(tape, input, forward(tape, input).output);
}

Var Model::loss(Tape &, const ModelInput &input, Var output) const {
  switch (config_.task) {
  case Task::GraphClassification: {
    if (input.graph_targets.cols() < 1) {
      throw std::invalid_argument("classification batch carries no labels");
    }
    const auto labels = class_labels(input.graph_targets, config_.num_classes);
    return cross_entropy(output, labels);
  }
  case Task::NodeRegression:
    if (!input.node_targets) {
      throw std::invalid_argument("node-regression batch carries no node targets");
    }
    return mse_loss(output, *input.node_targets);
  case Task::GraphRegression:
    if (!input.graph_targets.same_shape(output.value())) {
      throw std::invalid_argument("graph targets " + input.graph_targets.shape_string() +
                                  " do not match model output " + output.value().shape_string());
    }
    return mse_loss(output, input.graph_targets);
  }
  throw std::logic_error("loss: unreachable");
}

json Model::to_json() const {
  json params = json::array();
  for (const Parameter &p : params_.all()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"values", p.value.values()}});
  }
  return json{{"format", "lrgnn-model"}, {"version", 1}, {"config", config_}, {"parameters", params}};
}

Model Model::from_json(const json &j) {
  try {
    if (j.value("format", std::string{}) != "lrgnn-model" || j.value("version", 0) != 1) {
      throw SchemaError("model", "not an lrgnn-model version 1 document");
    }
    Model m = assemble(j.at("config").get<ModelConfig>(), 0);
    const json &params = j.at("parameters");
    if (!params.is_array() || params.size() != m.params_.size()) {
      throw SchemaError("model.parameters", "expected " + std::to_string(m.params_.size()) +
                                                " tensors");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter &p = m.params_[i];
      const std::string where = "model.parameters[" + std::to_string(i) + "]";
      if (params[i].at("name").get<std::string>() != p.name) {
        throw SchemaError(where + ".name", "expected '" + p.name + "'");
      }
      auto shape = params[i].at("shape").get<std::vector<std::size_t>>();
      auto values = params[i].at("values").get<std::vector<double>>();
      if (shape != p.value.shape() || values.size() != p.value.size()) {
        throw SchemaError(where + ".shape", "expected " + p.value.shape_string());
      }
      p.value = Tensor(std::move(shape), std::move(values));
    }
    return m;
  } catch (const json::exception &e) {
    throw SchemaError("model", e.what());
  } catch (const ConfigError &e) {
    throw SchemaError("model.config", e.what());
  }
}

void Model::save(const std::filesystem::path &path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << to_json().dump() << '\n';
}

Model Model::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw SchemaError(path.string(), e.what());
  }
  return from_json(j);
}

bool operator==(const Model &a, const Model &b) {
  if (!(a.config_ == b.config_) || a.params_.size() != b.params_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) {
      return false;
    }
  }
  return true;
}

} // namespace lrgnn
