#pragma once

#include "lrgnn/tensor.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace lrgnn {

// Undirected edge stored once with u < v.
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  friend bool operator==(const Edge &, const Edge &) = default;
};

// One molecule or material. Row counts of every per-node field equal
// node_count; edge_features has one row per stored edge (possibly 0 columns).
struct AtomGraph {
  std::size_t node_count = 0;
  std::vector<Edge> edges;
  Tensor node_features;            // N x p
  Tensor edge_features;            // |E| x f
  std::optional<Tensor> positions; // N x 3
  std::vector<int> atomic_numbers; // empty or N entries
  std::vector<double> graph_targets;
  std::optional<Tensor> node_targets; // N x t
  std::optional<double> cutoff;

  std::size_t node_feature_dim() const { return node_features.cols(); }
  std::size_t edge_feature_dim() const { return edge_features.cols(); }

  // Throws std::invalid_argument naming the violated invariant.
  void validate() const;

  friend bool operator==(const AtomGraph &, const AtomGraph &) = default;
};

struct RadiusEdges {
  std::vector<Edge> edges;
  std::vector<double> distances;
};

// Edge (u,v) iff u != v and |r_u - r_v| < cutoff. Rows of `positions` are
// 3-vectors.
RadiusEdges build_radius_graph(const Tensor &positions, double cutoff);

// Neighbour lists of the undirected graph, ascending.
std::vector<std::vector<std::size_t>> adjacency(std::size_t node_count,
                                                std::span<const Edge> edges);

// perm[i] is the new label of old node i.
AtomGraph permute(const AtomGraph &g, std::span<const std::size_t> perm);
std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm);

// Disjoint union of graphs. graph_targets of members are stacked into
// `graph_targets` (one row per member); the merged graph keeps none.
struct BatchedGraph {
  AtomGraph merged;
  std::vector<std::size_t> graph_index;  // node -> member
  std::vector<std::size_t> node_offsets; // size members+1
  std::vector<std::size_t> edge_offsets; // size members+1
  Tensor graph_targets;                  // members x t
  std::vector<std::optional<double>> cutoffs;

  std::size_t num_graphs() const { return node_offsets.empty() ? 0 : node_offsets.size() - 1; }
};

BatchedGraph batch(std::span<const AtomGraph> graphs);
BatchedGraph batch(std::span<const AtomGraph *const> graphs);
std::vector<AtomGraph> unbatch(const BatchedGraph &b);

} // namespace lrgnn
