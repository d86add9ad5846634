#include "lrgnn/embedder.hpp"
#include "lrgnn/encoders.hpp"
#include "lrgnn/errors.hpp"

#include <stdexcept>

namespace lrgnn {

std::string to_string(Channel c) {
  switch (c) {
  case Channel::X:
    return "X";
  case Channel::E:
    return "E";
  case Channel::L:
    return "L";
  case Channel::P:
    return "P";
  case Channel::C:
    return "C";
  case Channel::G:
    return "G";
  case Channel::Positions:
    return "positions";
  }
  return "?";
}

std::vector<Channel> EmbedderConfig::node_channels() const {
  if (identity()) {
    return {Channel::X};
  }
  if (use_encodings) {
    return {Channel::X, Channel::L, Channel::P, Channel::C};
  }
  return {Channel::X, Channel::L};
}

EdgeMode EmbedderConfig::edge_mode() const {
  if (use_encodings) {
    return EdgeMode::Topological;
  }
  return use_attention ? EdgeMode::Spectral : EdgeMode::Raw;
}

std::size_t channel_width(Channel c, const EmbedderConfig &config) {
  switch (c) {
  case Channel::X:
    return config.node_feature_dim;
  case Channel::E:
    return config.edge_feature_dim;
  case Channel::L:
    return config.lpe_dim;
  case Channel::P:
    return kNodeTopologyWidth;
  case Channel::C:
    return kElementPropertyCount;
  case Channel::G:
    return kEdgeTopologyWidth;
  case Channel::Positions:
    return 3;
  }
  return 0;
}

std::size_t EmbedderConfig::node_in_dim() const {
  std::size_t w = 0;
  for (Channel c : node_channels()) {
    w += channel_width(c, *this);
  }
  return w;
}

std::size_t EmbedderConfig::edge_in_dim() const {
  switch (edge_mode()) {
  case EdgeMode::Raw:
    return edge_feature_dim;
  case EdgeMode::Topological:
    return edge_feature_dim + kEdgeTopologyWidth;
  case EdgeMode::Spectral:
    return edge_feature_dim + lpe_dim;
  }
  return 0;
}

std::size_t EmbedderConfig::edge_out_dim() const {
  if (edge_mode() == EdgeMode::Raw || edge_dim == 0) {
    return edge_feature_dim;
  }
  return edge_dim;
}

Embedder Embedder::create(ParameterStore &store, const EmbedderConfig &config, Rng &rng) {
  Embedder e;
  e.config = config;
  if (!config.identity()) {
    if (config.hidden_dim == 0) {
      throw ConfigError("embedder: hidden_dim must be positive");
    }
    if (config.node_in_dim() == 0) {
      throw ConfigError("embedder: no node input columns");
    }
    e.w_node = store.add_weight("embed.node", config.node_in_dim(), config.hidden_dim, rng);
    if (config.edge_dim > 0 && config.edge_in_dim() > 0) {
      e.w_edge = store.add_weight("embed.edge", config.edge_in_dim(), config.edge_dim, rng);
    }
  }
  return e;
}

namespace {

void check_channel(Var v, Channel c, std::size_t rows, std::size_t width, const char *side) {
  if (!v.valid()) {
    throw std::invalid_argument(std::string(side) + ": channel " + to_string(c) +
                                " is required but missing");
  }
  if (v.cols() != width) {
    throw std::invalid_argument(std::string(side) + ": channel " + to_string(c) + " has width " +
                                std::to_string(v.cols()) + ", expected " + std::to_string(width));
  }
  if (v.rows() != rows) {
    throw std::invalid_argument(std::string(side) + ": channel " + to_string(c) + " has " +
                                std::to_string(v.rows()) + " rows, expected " +
                                std::to_string(rows));
  }
}

Var node_channel(const NodeChannels &ch, Channel c) {
  switch (c) {
  case Channel::X:
    return ch.X;
  case Channel::L:
    return ch.L;
  case Channel::P:
    return ch.P;
  case Channel::C:
    return ch.C;
  default:
    return Var{};
  }
}

} // namespace

Var embed_nodes(Tape &tape, const ParameterStore &store, const Embedder &embedder,
                const NodeChannels &channels) {
  const EmbedderConfig &cfg = embedder.config;
  if (!channels.X.valid()) {
    throw std::invalid_argument("embed_nodes: channel X is required but missing");
  }
  const std::size_t n = channels.X.rows();
  std::vector<Var> parts;
  for (Channel c : cfg.node_channels()) {
    Var v = node_channel(channels, c);
    check_channel(v, c, n, channel_width(c, cfg), "embed_nodes");
    parts.push_back(v);
  }
  if (cfg.identity()) {
    return channels.X;
  }
  Var z = parts.size() == 1 ? parts.front() : concat_cols(parts);
  return matmul(z, store.bind(tape, *embedder.w_node));
}

Var spectral_difference(Var lpe, const Index &edge_u, const Index &edge_v) {
  return abs(sub(gather_rows(lpe, edge_u), gather_rows(lpe, edge_v)));
}

Var embed_edges(Tape &tape, const ParameterStore &store, const Embedder &embedder,
                const EdgeChannels &channels) {
  const EmbedderConfig &cfg = embedder.config;
  if (!channels.edge_u || !channels.edge_v || channels.edge_u->size() != channels.edge_v->size()) {
    throw std::invalid_argument("embed_edges: edge endpoints missing or inconsistent");
  }
  const std::size_t m = channels.edge_u->size();
  if (cfg.edge_feature_dim > 0) {
    check_channel(channels.E, Channel::E, m, cfg.edge_feature_dim, "embed_edges");
  }
  if (cfg.edge_mode() == EdgeMode::Raw || cfg.edge_dim == 0) {
    return cfg.edge_feature_dim > 0 ? channels.E : Var{};
  }
  std::vector<Var> parts;
  if (cfg.edge_feature_dim > 0) {
    parts.push_back(channels.E);
  }
  if (cfg.edge_mode() == EdgeMode::Topological) {
    check_channel(channels.G, Channel::G, m, kEdgeTopologyWidth, "embed_edges");
    parts.push_back(channels.G);
  } else {
    if (!channels.L.valid()) {
      throw std::invalid_argument(
          "embed_edges: spectral-difference mode requires channel L, which is missing");
    }
    if (channels.L.cols() != cfg.lpe_dim) {
      throw std::invalid_argument("embed_edges: channel L has width " +
                                  std::to_string(channels.L.cols()) + ", expected " +
                                  std::to_string(cfg.lpe_dim));
    }
    parts.push_back(spectral_difference(channels.L, channels.edge_u, channels.edge_v));
  }
  if (m == 0) {
    return tape.constant(Tensor::matrix(0, cfg.edge_dim));
  }
  Var z = parts.size() == 1 ? parts.front() : concat_cols(parts);
  return matmul(z, store.bind(tape, *embedder.w_edge));
}

} // namespace lrgnn
