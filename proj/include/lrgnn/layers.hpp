#pragma once

// Learnable graph blocks: message passing layers, multi-head self-attention,
// the hybrid (local + global) block, pooling, and an over-smoothing probe.

#include "lrgnn/autodiff.hpp"
#include "lrgnn/graph.hpp"
#include "lrgnn/parameters.hpp"
#include "lrgnn/random.hpp"

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lrgnn {

// Each undirected edge e = (u, v) becomes two directed messages:
// 2e carries v -> u and 2e+1 carries u -> v.
struct MessageGraph {
  std::size_t node_count = 0;
  Index dst;        // receiving node per message
  Index src;        // sending node per message
  Index undirected; // row of the undirected edge attribute
  std::shared_ptr<const std::vector<double>> degree;

  static MessageGraph build(std::size_t node_count, std::span<const Edge> edges);
  std::size_t message_count() const { return dst->size(); }
};

struct RadialBasis {
  std::size_t count = 16;
  double cutoff = 5.0;
  friend bool operator==(const RadialBasis &, const RadialBasis &) = default;
};

struct AngularBasis {
  bool enabled = true;
  std::size_t order = 4;
  std::size_t width() const { return enabled ? order + 1 : 0; }
  friend bool operator==(const AngularBasis &, const AngularBasis &) = default;
};

// Fixed (non-learnable) expansions per directed message u <- v:
//   radial[m]  = exp(-(r_uv - mu_k)^2 / (2 sigma^2)), 16 centres on [0, cutoff],
//                sigma = centre spacing
//   angular[m] = sum over w in N(u)\{v} of cos(k * theta_uvw), k = 0..order
// Throws std::invalid_argument on coincident endpoints.
struct GeometricBasis {
  Tensor radial;
  Tensor angular;
  Tensor distance; // per message, r_uv
};
GeometricBasis geometric_basis(const Tensor &positions, const MessageGraph &graph,
                               const RadialBasis &radial, const AngularBasis &angular);
// Angle between r_v - r_u and r_w - r_u, in [0, pi].
double bond_angle(const Tensor &positions, std::size_t u, std::size_t v, std::size_t w);

enum class MpnnKind { EdgeConditionedSum, MultiAggregator, Geometric };
enum class Aggregator { Sum, Mean, Max, Multi };

std::string to_string(MpnnKind k);
std::string to_string(Aggregator a);
MpnnKind parse_mpnn_kind(const std::string &s);
Aggregator parse_aggregator(const std::string &s);
Aggregator default_aggregator(MpnnKind k);

// One message passing layer:
//   m_{u<-v} = xi(h_u, h_v, e_uv [, ebar_uv])
//   hbar_u   = aggregate over v of m_{u<-v}
//   h'_u     = [h_u if widths match] + MLP([h_u || hbar_u])
// xi is silu(affine) for the edge-conditioned and geometric kinds and plain
// affine for the multi-aggregator kind (whose aggregate is
// [mean || max || min || mean * log(deg + 1)]).
struct MpnnLayer {
  MpnnKind kind = MpnnKind::EdgeConditionedSum;
  Aggregator aggregator = Aggregator::Sum;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t edge_dim = 0;
  RadialBasis radial;
  AngularBasis angular;
  Slot w_message = 0, b_message = 0;
  Slot w_radial = 0, w_angular = 0; // geometric kind only
  Slot w_update1 = 0, b_update1 = 0, w_update2 = 0, b_update2 = 0;

  static MpnnLayer create(ParameterStore &store, const std::string &name, MpnnKind kind,
                          Aggregator aggregator, std::size_t in_dim, std::size_t out_dim,
                          std::size_t edge_dim, RadialBasis radial, AngularBasis angular,
                          Rng &rng);
  std::size_t aggregate_width() const { return aggregator == Aggregator::Multi ? 4 * out_dim : out_dim; }
};

// Learned geometric edge embedding ebar = radial * W_radial + angular * W_angular.
Var geometric_edge_embed(Tape &tape, const ParameterStore &store, const MpnnLayer &layer,
                         const GeometricBasis &basis);

// `edge_attr` has one row per undirected edge; pass an invalid Var when the
// layer has no edge attributes. `basis` is required for the geometric kind.
Var mpnn_forward(Tape &tape, const ParameterStore &store, const MpnnLayer &layer, Var h,
                 Var edge_attr, const MessageGraph &graph, const GeometricBasis *basis);

// Block-diagonal attention: nodes attend only within their own graph,
// delimited by `offsets` (size graphs + 1).
struct AttentionLayer {
  std::size_t in_dim = 0;
  std::size_t head_dim = 0;
  std::size_t heads = 0;
  std::size_t out_dim = 0;
  Slot w_query = 0, w_key = 0, w_value = 0, w_out = 0;

  // Throws ConfigError unless heads > 0 and out_dim % heads == 0.
  static AttentionLayer create(ParameterStore &store, const std::string &name, std::size_t in_dim,
                               std::size_t out_dim, std::size_t heads, Rng &rng);
  // General form used for parameter audits: any head width.
  static AttentionLayer create_with_head_dim(ParameterStore &store, const std::string &name,
                                             std::size_t in_dim, std::size_t head_dim,
                                             std::size_t heads, std::size_t out_dim, Rng &rng);
};

using Offsets = std::shared_ptr<const std::vector<std::size_t>>;

Var multi_head_attention(Tape &tape, const ParameterStore &store, const AttentionLayer &layer,
                         Var h, const Offsets &offsets);
// Attention matrices softmax(Q K^T / sqrt(d_head)) of one graph segment,
// one per head.
std::vector<Tensor> attention_weights(const ParameterStore &store, const AttentionLayer &layer,
                                      const Tensor &h, std::size_t begin, std::size_t end);

// Tape op: per segment and head, softmax(Q K^T * scale) V, heads concatenated.
Var segment_attention(Var q, Var k, Var v, std::size_t heads, const Offsets &offsets);

// X' = MLP(MPNN(X) + MHA(X)); edges pass through the block unchanged.
struct GpsBlock {
  MpnnLayer mpnn;
  AttentionLayer attention;
  Slot w_fuse1 = 0, b_fuse1 = 0, w_fuse2 = 0, b_fuse2 = 0;

  static GpsBlock create(ParameterStore &store, const std::string &name, MpnnKind kind,
                         Aggregator aggregator, std::size_t width, std::size_t edge_dim,
                         std::size_t heads, RadialBasis radial, AngularBasis angular, Rng &rng);
};

struct GpsOutput {
  Var x;
  Var e;
  Var local;  // MPNN branch output
  Var global; // attention branch output
};

GpsOutput gps_block(Tape &tape, const ParameterStore &store, const GpsBlock &block, Var x, Var e,
                    const MessageGraph &graph, const GeometricBasis *basis,
                    const Offsets &offsets);

enum class PoolMode { Min, Max, Sum, Mean };
std::string to_string(PoolMode m);
PoolMode parse_pool_mode(const std::string &s);

// Per-graph reduction of node rows. Throws std::invalid_argument when a graph
// has no nodes.
Var pool(Var h, const Index &graph_index, std::size_t num_graphs, PoolMode mode);

// Mean over node pairs (i < j) of cosine similarity of rows; zero rows
// contribute 0. One value per matrix.
std::vector<double> oversmoothing_diagnostic(std::span<const Tensor> per_layer);
double mean_pairwise_cosine(const Tensor &h);
// One step of unweighted mean aggregation over the closed neighbourhood.
Tensor mean_aggregate(const Tensor &h, const AtomGraph &g);

} // namespace lrgnn
