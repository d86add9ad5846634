#include "lrgnn/encoders.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace lrgnn;

namespace {

AtomGraph make_graph(std::size_t n, std::vector<Edge> edges) {
  AtomGraph g;
  g.node_count = n;
  g.edges = std::move(edges);
  g.node_features = Tensor::matrix(n, 1);
  g.edge_features = Tensor::matrix(g.edges.size(), 0);
  return g;
}

const AtomGraph kTriangle = make_graph(3, {{0, 1}, {0, 2}, {1, 2}});
const AtomGraph kPath3 = make_graph(3, {{0, 1}, {1, 2}});

enum NodeColumn { kDegree, kCloseness, kBetweenness, kEigen, kPageRank, kClustering, kCore, kHarmonic, kEccentricity };

} // namespace

TEST(ChemicalDescriptors, HydrogenRowMatchesTable) {
  const auto &table = ElementTable::builtin();
  const int z[] = {1};
  const Tensor c = chemical_descriptors(z, table);
  const auto &row = table.row(1);
  for (std::size_t j = 0; j < kElementPropertyCount; ++j) {
    EXPECT_EQ(c(0, j), row[j]);
  }
  EXPECT_DOUBLE_EQ(c(0, 0), 1.008);
}

TEST(ChemicalDescriptors, BuiltinMatchesDataFile) {
  const auto file = ElementTable::load(LRGNN_SOURCE_DIR "/data/elements.csv");
  const auto &builtin = ElementTable::builtin();
  ASSERT_EQ(file.max_z(), builtin.max_z());
  for (int z = 1; z <= file.max_z(); ++z) {
    EXPECT_EQ(file.row(z), builtin.row(z));
  }
}

TEST(ChemicalDescriptors, AllCarbonRowsIdentical) {
  const int z[] = {6, 6, 6, 6};
  const Tensor c = chemical_descriptors(z, ElementTable::builtin());
  for (std::size_t i = 1; i < 4; ++i) {
    for (std::size_t j = 0; j < kElementPropertyCount; ++j) {
      EXPECT_EQ(c(i, j), c(0, j));
    }
  }
}

TEST(ChemicalDescriptors, RejectsUnsupportedElement) {
  const int z[] = {6, 120};
  EXPECT_THROW(chemical_descriptors(z, ElementTable::builtin()), std::invalid_argument);
}

TEST(NodeEncodings, Triangle) {
  const auto r = node_topological_encodings(kTriangle);
  ASSERT_TRUE(r.valid);
  for (std::size_t u = 0; u < 3; ++u) {
    EXPECT_EQ(r.values(u, kDegree), 2.0);
    EXPECT_EQ(r.values(u, kClustering), 1.0);
    EXPECT_EQ(r.values(u, kEccentricity), 1.0);
    EXPECT_EQ(r.values(u, kBetweenness), 0.0);
  }
}

TEST(NodeEncodings, PathCentreCarriesAllBetweenness) {
  const auto r = node_topological_encodings(kPath3);
  EXPECT_DOUBLE_EQ(r.values(1, kBetweenness), 1.0);
  EXPECT_EQ(r.values(1, kDegree), 2.0);
  EXPECT_EQ(r.values(0, kBetweenness), 0.0);
  EXPECT_EQ(r.values(2, kBetweenness), 0.0);
}

TEST(NodeEncodings, SingleNode) {
  const auto r = node_topological_encodings(make_graph(1, {}));
  ASSERT_TRUE(r.valid);
  EXPECT_EQ(r.values(0, kDegree), 0.0);
  EXPECT_EQ(r.values(0, kClustering), 0.0);
  EXPECT_EQ(r.values(0, kEccentricity), 0.0);
  EXPECT_NEAR(r.values(0, kPageRank), 1.0, 1e-15);
}

TEST(NodeEncodings, DisconnectedGraphIsFlagged) {
  const auto r = node_topological_encodings(make_graph(4, {{0, 1}, {2, 3}}));
  EXPECT_FALSE(r.valid);
  EXPECT_TRUE(std::isinf(r.values(0, kEccentricity)));
}

TEST(NodeEncodings, MatchBruteForceOracles) {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 8);
    const AtomGraph g = make_graph(n, support::random_connected_edges(rng, n, uniform01(rng)));
    const Tensor oracle = support::node_encoding_oracle(g);
    const auto r = node_topological_encodings(g);
    ASSERT_TRUE(r.valid);
    EXPECT_LT(max_abs_diff(r.values, oracle), 1e-9) << "n=" << n << " trial " << t;
  }
}

TEST(EdgeEncodings, TriangleEdge) {
  const auto r = edge_topological_encodings(kTriangle);
  ASSERT_TRUE(r.valid);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_DOUBLE_EQ(r.values(e, 1), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.values(e, 2), 1.0 / std::log(2.0));
    EXPECT_EQ(r.values(e, 3), 4.0);
  }
}

TEST(EdgeEncodings, SingleEdge) {
  const auto r = edge_topological_encodings(make_graph(2, {{0, 1}}));
  EXPECT_EQ(r.values(0, 1), 0.0);
  EXPECT_EQ(r.values(0, 3), 1.0);
}

TEST(EdgeEncodings, StarSpokesShareNoNeighbours) {
  const auto r = edge_topological_encodings(make_graph(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}));
  for (std::size_t e = 0; e < 4; ++e) {
    EXPECT_EQ(r.values(e, 1), 0.0);
    EXPECT_EQ(r.values(e, 2), 0.0);
  }
}

TEST(EdgeEncodings, MatchBruteForceOracles) {
  Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + uniform_index(rng, 7);
    const AtomGraph g = make_graph(n, support::random_connected_edges(rng, n, uniform01(rng)));
    const auto r = edge_topological_encodings(g);
    EXPECT_LT(max_abs_diff(r.values, support::edge_encoding_oracle(g)), 1e-9);
  }
}

TEST(LaplacianPe, PathThreeFirstColumn) {
  const auto r = laplacian_pe(kPath3, 1);
  ASSERT_TRUE(r.pe.valid);
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(r.pe.values(0, 0), s, 1e-12);
  EXPECT_NEAR(r.pe.values(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(r.pe.values(2, 0), -s, 1e-12);
}

TEST(LaplacianPe, ColumnsOrthogonalToOnesAndEigen) {
  Rng rng(23);
  int checked = 0;
  for (int t = 0; t < 200 && checked < 50; ++t) {
    const std::size_t n = 4 + uniform_index(rng, 10);
    const AtomGraph g = make_graph(n, support::random_connected_edges(rng, n, 0.3));
    const auto r = laplacian_pe(g, 3);
    if (!r.pe.valid) {
      continue;
    }
    ++checked;
    const Tensor lap = graph_laplacian(g, LaplacianKind::Combinatorial);
    for (std::size_t c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum += r.pe.values(i, c);
      }
      EXPECT_LT(std::abs(sum), 1e-8);
      const double lambda = r.eigenvalues[c + 1];
      for (std::size_t i = 0; i < n; ++i) {
        double lv = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          lv += lap(i, j) * r.pe.values(j, c);
        }
        EXPECT_LT(std::abs(lv - lambda * r.pe.values(i, c)), 1e-8);
      }
    }
  }
  EXPECT_GT(checked, 10);
}

TEST(LaplacianPe, TooFewNodesIsFlagged) {
  const auto r = laplacian_pe(make_graph(2, {{0, 1}}), 2);
  EXPECT_FALSE(r.pe.valid);
}

TEST(LaplacianPe, DegenerateSpectrumIsFlagged) {
  // The 4-cycle has eigenvalues 0, 2, 2, 4.
  const auto r = laplacian_pe(make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}), 1);
  EXPECT_FALSE(r.pe.valid);
}

TEST(Standardize, PopulationConvention) {
  const Tensor col = Tensor::from_rows({{1}, {2}, {3}});
  const auto s = standardize(col);
  EXPECT_DOUBLE_EQ(s.stats.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(s.stats.std[0], std::sqrt(2.0 / 3.0));
  const double c = 1.0 / std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(s.values[0], -c, 1e-15);
  EXPECT_EQ(s.values[1], 0.0);
  EXPECT_NEAR(s.values[2], c, 1e-15);
}

TEST(Standardize, ConstantColumnMapsToZero) {
  const auto s = standardize(Tensor::from_rows({{5}, {5}, {5}}));
  for (double v : s.values.values()) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(Standardize, TrainStatsRoundTrip) {
  Rng rng(24);
  const Tensor train = support::random_tensor(rng, 20, 4, 3.0);
  const Tensor test = support::random_tensor(rng, 7, 4, 5.0);
  const auto fitted = standardize(train);
  const auto applied = standardize(test, &fitted.stats);
  EXPECT_LT(max_abs_diff(destandardize(applied.values, fitted.stats), test), 1e-12);
}

TEST(ValidateEncodings, KeepsFiniteBundle) {
  const auto b = encode_graph(make_graph(4, {{0, 1}, {1, 2}, {2, 3}}), ElementTable::builtin(),
                              {.lpe_dim = 2, .chemical = false});
  EXPECT_TRUE(validate_encodings(b).keep);
}

TEST(ValidateEncodings, DiscardsDisconnectedGraph) {
  const auto b = encode_graph(make_graph(4, {{0, 1}, {2, 3}}), ElementTable::builtin(),
                              {.lpe_dim = 1, .chemical = false});
  EXPECT_FALSE(validate_encodings(b).keep);
}

TEST(ValidateEncodings, DiscardsNaNInEdgeChannel) {
  auto b = encode_graph(make_graph(4, {{0, 1}, {1, 2}, {2, 3}}), ElementTable::builtin(),
                        {.lpe_dim = 2, .chemical = false});
  b.G(1, 2) = std::numeric_limits<double>::quiet_NaN();
  const auto v = validate_encodings(b);
  EXPECT_FALSE(v.keep);
  EXPECT_NE(v.reason.find("edge encodings"), std::string::npos);
}

TEST(ValidateEncodings, DiscardsUnsupportedElement) {
  AtomGraph g = make_graph(3, {{0, 1}, {1, 2}});
  g.atomic_numbers = {6, 120, 1};
  const auto b = encode_graph(g, ElementTable::builtin(), {.lpe_dim = 1});
  EXPECT_FALSE(validate_encodings(b).keep);
}

TEST(ChannelStats, FitOnTrainAndApply) {
  Rng rng(25);
  std::vector<EncodingBundle> bundles;
  for (int i = 0; i < 5; ++i) {
    bundles.push_back(*support::random_sample(rng, {}, 2).encodings);
  }
  std::vector<const EncodingBundle *> ptrs;
  for (const auto &b : bundles) {
    ptrs.push_back(&b);
  }
  const ChannelStats stats = fit_channel_stats(ptrs);
  double mean = 0.0;
  std::size_t rows = 0;
  for (const auto &b : bundles) {
    const auto s = apply_channel_stats(b, stats);
    for (std::size_t i = 0; i < s.P.rows(); ++i) {
      mean += s.P(i, 0);
    }
    rows += s.P.rows();
  }
  EXPECT_NEAR(mean / static_cast<double>(rows), 0.0, 1e-12);
}
