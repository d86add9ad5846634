#pragma once

// Per-graph chemical, topological and spectral channels.
//
//   C  N x 15   element descriptors looked up by atomic number
//   P  N x 9    degree, closeness, betweenness, eigenvector centrality,
//               PageRank, clustering, k-core, harmonic centrality, eccentricity
//   G  |E| x 4  edge betweenness, Jaccard, Adamic-Adar, preferential attachment
//   L  N x d    Laplacian eigenvectors of the d smallest positive eigenvalues
//
// Encodings are computed on the raw graph and standardized later with
// statistics taken from the training split only.

#include "lrgnn/elements.hpp"
#include "lrgnn/graph.hpp"
#include "lrgnn/tensor.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lrgnn {

inline constexpr std::size_t kNodeTopologyWidth = 9;
inline constexpr std::size_t kEdgeTopologyWidth = 4;

enum class LaplacianKind { Combinatorial, SymmetricNormalized };

struct EncoderOptions {
  std::size_t lpe_dim = 2;
  LaplacianKind laplacian = LaplacianKind::Combinatorial;
  // Eigenvalue gaps below this make the eigenvector choice ambiguous.
  double degeneracy_gap = 1e-9;
  bool chemical = true;
};

// Result of a channel computation that may flag the graph as unusable.
struct ChannelResult {
  Tensor values;
  bool valid = true;
  std::string reason;
};

Tensor chemical_descriptors(std::span<const int> atomic_numbers, const ElementTable &table);
ChannelResult node_topological_encodings(const AtomGraph &g);
ChannelResult edge_topological_encodings(const AtomGraph &g);

struct LaplacianPe {
  ChannelResult pe;
  std::vector<double> eigenvalues; // full ascending spectrum
  Tensor eigenvectors;             // full basis, columns match eigenvalues
};
LaplacianPe laplacian_pe(const AtomGraph &g, std::size_t lpe_dim,
                         LaplacianKind kind = LaplacianKind::Combinatorial,
                         double degeneracy_gap = 1e-9);
Tensor graph_laplacian(const AtomGraph &g, LaplacianKind kind);

struct EncodingBundle {
  Tensor C; // N x 15
  Tensor P; // N x 9
  Tensor G; // |E| x 4
  Tensor L; // N x d
  std::vector<std::string> invalid_reasons;

  friend bool operator==(const EncodingBundle &, const EncodingBundle &) = default;
};

EncodingBundle encode_graph(const AtomGraph &g, const ElementTable &table,
                            const EncoderOptions &options);

struct Verdict {
  bool keep = true;
  std::string reason;
};

// Discards bundles with any non-finite entry or any flagged sub-computation.
Verdict validate_encodings(const EncodingBundle &bundle);

struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> std; // population convention; floored at 1e-8 when applied

  friend bool operator==(const ColumnStats &, const ColumnStats &) = default;
};

inline constexpr double kStdFloor = 1e-8;

ColumnStats column_stats(const Tensor &columns);
struct Standardized {
  Tensor values;
  ColumnStats stats;
};
// Without train_stats the input is treated as the training split.
Standardized standardize(const Tensor &columns, const ColumnStats *train_stats = nullptr);
Tensor destandardize(const Tensor &columns, const ColumnStats &stats);

// Statistics for every channel, reduced over the training bundles.
struct ChannelStats {
  ColumnStats C, P, G, L;
  friend bool operator==(const ChannelStats &, const ChannelStats &) = default;
};
ChannelStats fit_channel_stats(std::span<const EncodingBundle *const> train);
EncodingBundle apply_channel_stats(const EncodingBundle &b, const ChannelStats &stats);

} // namespace lrgnn
