#pragma once

// Channel fusion: one bias-free linear map per side.
//
//   nodes  [X || L || P || C] * W_node           -> N x d_h
//   edges  [E || G]       * W_edge  (topological) -> |E| x d_e'
//          [E || |L_u - L_v|] * W_edge (spectral)
//
// With both switches open the node side is the identity on X. With d_e' = 0
// the raw edge attributes pass through unprojected.

#include "lrgnn/autodiff.hpp"
#include "lrgnn/parameters.hpp"
#include "lrgnn/random.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace lrgnn {

enum class Channel { X, E, L, P, C, G, Positions };
std::string to_string(Channel c);

enum class EdgeMode { Raw, Topological, Spectral };

struct EmbedderConfig {
  bool use_encodings = false; // S2 closed
  bool use_attention = false; // S1 closed
  std::size_t hidden_dim = 0;
  std::size_t edge_dim = 0; // d_e'
  std::size_t node_feature_dim = 0;
  std::size_t edge_feature_dim = 0;
  std::size_t lpe_dim = 0;

  bool identity() const { return !use_encodings && !use_attention; }
  // Node channels in concatenation order.
  std::vector<Channel> node_channels() const;
  EdgeMode edge_mode() const;
  std::size_t node_in_dim() const;
  std::size_t edge_in_dim() const;
  // Width handed to the first message passing layer.
  std::size_t node_out_dim() const { return identity() ? node_feature_dim : hidden_dim; }
  std::size_t edge_out_dim() const;
};

std::size_t channel_width(Channel c, const EmbedderConfig &config);

struct Embedder {
  EmbedderConfig config;
  std::optional<Slot> w_node;
  std::optional<Slot> w_edge;

  static Embedder create(ParameterStore &store, const EmbedderConfig &config, Rng &rng);
};

// Per-side channel values; channels outside the active set are ignored.
struct NodeChannels {
  Var X, L, P, C;
};
struct EdgeChannels {
  Var E, G, L;         // L: node-level LPE, used by the spectral mode
  Index edge_u, edge_v; // endpoints per undirected edge
};

// Throws std::invalid_argument naming the channel on a missing channel or a
// width or row mismatch.
Var embed_nodes(Tape &tape, const ParameterStore &store, const Embedder &embedder,
                const NodeChannels &channels);
Var embed_edges(Tape &tape, const ParameterStore &store, const Embedder &embedder,
                const EdgeChannels &channels);

// |L_u - L_v| per edge, as a tape op.
Var spectral_difference(Var lpe, const Index &edge_u, const Index &edge_v);

} // namespace lrgnn
