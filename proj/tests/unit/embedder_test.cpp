#include "lrgnn/embedder.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace lrgnn;

namespace {

EmbedderConfig config(bool encodings, bool attention, std::size_t edge_dim = 4) {
  return {.use_encodings = encodings,
          .use_attention = attention,
          .hidden_dim = 8,
          .edge_dim = edge_dim,
          .node_feature_dim = 9,
          .edge_feature_dim = 1,
          .lpe_dim = 5};
}

} // namespace

TEST(Embedder, IdentityReturnsXExactly) {
  ParameterStore store;
  Rng rng(1);
  const Embedder emb = Embedder::create(store, config(false, false), rng);
  EXPECT_EQ(store.size(), 0u);
  Tape tape;
  const Tensor x = support::random_tensor(rng, 6, 9);
  NodeChannels ch;
  ch.X = tape.constant(x);
  EXPECT_EQ(embed_nodes(tape, store, emb, ch).value(), x);
}

TEST(Embedder, FullNodeWidthIsSumOfChannels) {
  EXPECT_EQ(config(true, true).node_in_dim(), 9u + 5u + 9u + 15u);
  EXPECT_EQ(config(false, true).node_in_dim(), 9u + 5u);
  EXPECT_EQ(config(true, false).edge_in_dim(), 1u + 4u);
  EXPECT_EQ(config(false, true).edge_in_dim(), 1u + 5u);
}

TEST(Embedder, ZeroRowsMapToZeroRows) {
  ParameterStore store;
  Rng rng(2);
  const EmbedderConfig c = config(true, true);
  const Embedder emb = Embedder::create(store, c, rng);
  Tape tape;
  NodeChannels ch{tape.constant(Tensor::matrix(3, 9)), tape.constant(Tensor::matrix(3, 5)),
                  tape.constant(Tensor::matrix(3, 9)), tape.constant(Tensor::matrix(3, 15))};
  const Tensor out = embed_nodes(tape, store, emb, ch).value();
  EXPECT_EQ(out, Tensor::matrix(3, 8));
}

TEST(Embedder, MissingChannelIsNamed) {
  ParameterStore store;
  Rng rng(3);
  const Embedder emb = Embedder::create(store, config(false, true), rng);
  Tape tape;
  NodeChannels ch;
  ch.X = tape.constant(Tensor::matrix(3, 9));
  try {
    embed_nodes(tape, store, emb, ch);
    FAIL() << "missing L accepted";
  } catch (const std::invalid_argument &e) {
    EXPECT_NE(std::string(e.what()).find("channel L"), std::string::npos) << e.what();
  }
}

TEST(Embedder, WidthMismatchIsRejected) {
  ParameterStore store;
  Rng rng(4);
  const Embedder emb = Embedder::create(store, config(false, true), rng);
  Tape tape;
  NodeChannels ch{tape.constant(Tensor::matrix(3, 9)), tape.constant(Tensor::matrix(3, 4)), {}, {}};
  EXPECT_THROW(embed_nodes(tape, store, emb, ch), std::invalid_argument);
}

TEST(SpectralDifference, EqualEncodingsGiveZero) {
  Tape tape;
  Var l = tape.constant(Tensor::from_rows({{0.3, -1.0}, {0.3, -1.0}, {2.0, 1.0}}));
  const Tensor d = spectral_difference(l, make_index({0, 1}), make_index({1, 2})).value();
  EXPECT_EQ(d(0, 0), 0.0);
  EXPECT_EQ(d(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(d(1, 0), 1.7);
  EXPECT_DOUBLE_EQ(d(1, 1), 2.0);
}

TEST(SpectralDifference, SymmetricInEndpoints) {
  Rng rng(5);
  Tape tape;
  Var l = tape.constant(support::random_tensor(rng, 4, 3));
  const Tensor a = spectral_difference(l, make_index({0, 2}), make_index({3, 1})).value();
  const Tensor b = spectral_difference(l, make_index({3, 1}), make_index({0, 2})).value();
  EXPECT_EQ(a, b);
}

TEST(Embedder, ZeroEdgeWidthPassesDistancesThrough) {
  ParameterStore store;
  Rng rng(6);
  const Embedder emb = Embedder::create(store, config(true, true, 0), rng);
  EXPECT_FALSE(emb.w_edge.has_value());
  Tape tape;
  const Tensor dist = Tensor::from_rows({{1.1}, {0.7}});
  EdgeChannels ch;
  ch.E = tape.constant(dist);
  ch.G = tape.constant(Tensor::matrix(2, 4));
  ch.edge_u = make_index({0, 1});
  ch.edge_v = make_index({1, 2});
  EXPECT_EQ(embed_edges(tape, store, emb, ch).value(), dist);
}

TEST(Embedder, SpectralModeNeedsL) {
  ParameterStore store;
  Rng rng(7);
  const Embedder emb = Embedder::create(store, config(false, true), rng);
  Tape tape;
  EdgeChannels ch;
  ch.E = tape.constant(Tensor::matrix(2, 1));
  ch.edge_u = make_index({0, 1});
  ch.edge_v = make_index({1, 2});
  EXPECT_THROW(embed_edges(tape, store, emb, ch), std::invalid_argument);
}

TEST(Embedder, GradientsMatchFiniteDifferences) {
  ParameterStore store;
  Rng rng(8);
  const Embedder emb = Embedder::create(store, config(true, true), rng);
  const std::vector<Tensor> inputs = {support::random_tensor(rng, 4, 9), support::random_tensor(rng, 4, 5),
                                      support::random_tensor(rng, 4, 9), support::random_tensor(rng, 4, 15),
                                      support::random_tensor(rng, 3, 1), support::random_tensor(rng, 3, 4)};
  const Tensor probe_n = support::random_tensor(rng, 4, 8);
  const Tensor probe_e = support::random_tensor(rng, 3, 4);
  const auto u = make_index({0, 1, 2}), v = make_index({1, 2, 3});
  auto loss = [&](Tape &tape, const ParameterStore &params, std::span<const Var> x) {
    Var n = embed_nodes(tape, params, emb, {x[0], x[1], x[2], x[3]});
    Var e = embed_edges(tape, params, emb, {x[4], x[5], {}, u, v});
    return add(sum_all(mul(n, tape.constant(probe_n))), sum_all(mul(e, tape.constant(probe_e))));
  };
  const auto wrt_inputs = support::gradcheck(
      [&](Tape &tape, std::span<const Var> x) { return loss(tape, store, x); }, inputs);
  EXPECT_LT(wrt_inputs.relative_error, 1e-6);
  const auto wrt_weights = support::gradcheck_parameters(store, [&](Tape &tape, const ParameterStore &params) {
    std::vector<Var> x;
    for (const Tensor &t : inputs) {
      x.push_back(tape.constant(t));
    }
    return loss(tape, params, x);
  });
  EXPECT_LT(wrt_weights.relative_error, 1e-6);
}
