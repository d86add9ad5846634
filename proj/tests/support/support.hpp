#pragma once

// Shared fixtures for the unit and acceptance suites: random graphs, a
// central-difference gradient checker, rigid motions, and brute-force graph
// oracles that share no code with the library encoders.

#include "lrgnn/autodiff.hpp"
#include "lrgnn/graph.hpp"
#include "lrgnn/model.hpp"
#include "lrgnn/parameters.hpp"
#include "lrgnn/random.hpp"
#include "lrgnn/sample.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace lrgnn::support {

Tensor random_tensor(Rng &rng, std::size_t rows, std::size_t cols, double scale = 1.0);

// Spanning tree plus each remaining pair with probability `extra`.
std::vector<Edge> random_connected_edges(Rng &rng, std::size_t n, double extra);

struct GraphSpec {
  std::size_t min_nodes = 2;
  std::size_t max_nodes = 10;
  double extra_edge_prob = 0.2;
  std::size_t node_dim = 3;
  std::size_t edge_dim = 2;
  bool positions = false;
  std::size_t graph_targets = 1;
};

// Connected graph with random features, atomic numbers in 1..9, and (when
// requested) positions on a jittered chain so no two nodes coincide.
AtomGraph random_graph(Rng &rng, const GraphSpec &spec);

// Sample carrying raw channels and a random (standardized-looking) bundle
// of the given LPE width.
Sample random_sample(Rng &rng, const GraphSpec &spec, std::size_t lpe_dim);

// Relabels nodes of a sample; encoding rows follow their nodes and edge rows
// keep their order.
Sample permute_sample(const Sample &s, std::span<const std::size_t> perm);
std::vector<std::size_t> random_permutation(Rng &rng, std::size_t n);

// Orthogonal 3x3 rotation from a random unit quaternion.
Tensor random_rotation(Rng &rng);
// rows(positions) * R^T + t.
Tensor rigid_motion(const Tensor &positions, const Tensor &rotation, const double shift[3]);

// Builds a scalar loss from the tape leaves created for `inputs`.
using LossFn = std::function<Var(Tape &, std::span<const Var>)>;

struct GradCheck {
  double relative_error = 0.0; // |a - n| / max(|a| + |n|, 1e-12) over flattened gradients
  double max_abs_error = 0.0;
};

// Central differences with step h on every entry of every input.
GradCheck gradcheck(const LossFn &loss, const std::vector<Tensor> &inputs, double h = 1e-6);

// Same check over every scalar of a parameter store. The store is perturbed
// in place (and restored), so `loss` may read it through another owner.
using ParamLossFn = std::function<Var(Tape &, const ParameterStore &)>;
GradCheck gradcheck_parameters(ParameterStore &store, const ParamLossFn &loss, double h = 1e-6);

// Search-space rules written out literally; empty when `c` is a
// legal draw for the branch.
std::string search_space_violation(const ModelConfig &c, bool has_pos, bool attention, bool encodings);

// Oracles on the unweighted graph. Distances are -1 when unreachable.
std::vector<std::vector<int>> floyd_warshall(std::size_t n, std::span<const Edge> edges);
struct PathCounts {
  std::vector<double> node;  // unnormalized, unordered pairs
  std::vector<double> edge;  // unnormalized, unordered pairs
};
// Enumerates every shortest path explicitly.
PathCounts enumerate_shortest_paths(std::size_t n, std::span<const Edge> edges);
std::vector<double> core_numbers_by_pruning(std::size_t n, std::span<const Edge> edges);
// Perron vector of A (unit norm, positive) from a dense symmetric solver.
std::vector<double> perron_vector(std::size_t n, std::span<const Edge> edges);
// Solves (I - d A D^-1) x = (1 - d)/n; requires no isolated nodes.
std::vector<double> pagerank_linear(std::size_t n, std::span<const Edge> edges, double damping);

// All nine node and four edge columns from the oracles above, for connected
// graphs.
Tensor node_encoding_oracle(const AtomGraph &g);
Tensor edge_encoding_oracle(const AtomGraph &g);

} // namespace lrgnn::support
