#include "lrgnn/autodiff.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lrgnn;
using support::gradcheck;
using support::random_tensor;

namespace {

constexpr double kGradTolerance = 1e-6;

Var weighted_sum(Tape &tape, Var x, std::uint64_t seed) {
  Rng rng(seed);
  return sum_all(mul(x, tape.constant(random_tensor(rng, x.rows(), x.cols()))));
}

} // namespace

TEST(Autodiff, SquareAtThreeHasGradientSix) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(3.0));
  Var y = mul(x, x);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 6.0);
}

TEST(Autodiff, MatmulGradientIsUpstreamTimesBTranspose) {
  Rng rng(5);
  const Tensor a = random_tensor(rng, 2, 3), b = random_tensor(rng, 3, 2);
  const Tensor up = random_tensor(rng, 2, 2);
  Tape tape;
  Var va = tape.variable(a);
  Var c = matmul(va, tape.constant(b));
  tape.backward(sum_all(mul(c, tape.constant(up))));
  EXPECT_LT(max_abs_diff(tape.grad(va), matmul(up, transpose(b))), 1e-14);
  const auto check = gradcheck(
      [&](Tape &t, std::span<const Var> x) { return weighted_sum(t, matmul(x[0], x[1]), 1); },
      {a, b});
  EXPECT_LT(check.relative_error, kGradTolerance);
}

TEST(Autodiff, SoftmaxOfSumOfSquaresMatchesFiniteDifferences) {
  Rng rng(6);
  const auto check = gradcheck(
      [](Tape &, std::span<const Var> x) { return sum_all(square(softmax_rows(x[0]))); },
      {random_tensor(rng, 3, 4)});
  EXPECT_LT(check.relative_error, kGradTolerance);
}

TEST(Autodiff, SoftmaxZeroRowIsUniform) {
  const Tensor s = softmax_rows(Tensor::matrix(1, 4));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(s[i], 0.25);
  }
}

TEST(Autodiff, SoftmaxSaturatesWithoutOverflow) {
  const Tensor s = softmax_rows(Tensor::from_rows({{1000.0, 0.0}}));
  EXPECT_NEAR(s[0], 1.0, 1e-12);
  EXPECT_NEAR(s[1], 0.0, 1e-12);
}

TEST(Autodiff, SoftmaxIsShiftInvariant) {
  Rng rng(7);
  Tensor row = random_tensor(rng, 1, 6);
  Tensor shifted = row;
  for (double &v : shifted.values()) {
    v += 17.0;
  }
  EXPECT_LT(max_abs_diff(softmax_rows(row), softmax_rows(shifted)), 1e-15);
}

TEST(Autodiff, FanOutAccumulatesGradients) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(2.0));
  Var y = add(mul(x, x), scale(x, 3.0)); // x^2 + 3x
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 7.0);
}

TEST(Autodiff, ParameterBindingIsShared) {
  Parameter p{"w", Tensor::scalar(1.5)};
  Tape tape;
  Var a = tape.param(p);
  Var b = tape.param(p);
  EXPECT_EQ(a.id(), b.id());
  tape.backward(mul(a, b));
  EXPECT_DOUBLE_EQ(tape.grad(p)[0], 3.0);
}

TEST(Autodiff, TapeIsSingleUse) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(1.0));
  tape.backward(x);
  EXPECT_THROW(tape.backward(x), std::logic_error);
}

TEST(Autodiff, BackwardRequiresScalar) {
  Tape tape;
  Var x = tape.variable(Tensor::matrix(2, 2));
  EXPECT_THROW(tape.backward(x), std::invalid_argument);
}

struct OpCase {
  const char *name;
  support::LossFn loss;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
};

class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const auto seg = make_index({0, 2, 0, 1, 2});
  const auto rows = make_index({4, 0, 0, 3});
  const auto factors = std::make_shared<const std::vector<double>>(std::vector<double>{0.5, 2.0, -1.0, 3.0, 0.0});
  const std::vector<int> labels{2, 0, 1, 2, 1};
  const std::vector<OpCase> cases = {
      {"add", [](Tape &t, std::span<const Var> x) { return weighted_sum(t, add(x[0], x[1]), 2); }, {{5, 3}, {5, 3}}},
      {"sub", [](Tape &t, std::span<const Var> x) { return weighted_sum(t, sub(x[0], x[1]), 2); }, {{5, 3}, {5, 3}}},
      {"mul", [](Tape &t, std::span<const Var> x) { return weighted_sum(t, mul(x[0], x[1]), 2); }, {{5, 3}, {5, 3}}},
      {"add_row", [](Tape &t, std::span<const Var> x) { return weighted_sum(t, add_row(x[0], x[1]), 2); }, {{5, 3}, {1, 3}}},
      {"relu", [](Tape &t, std::span<const Var> x) { return weighted_sum(t, relu(x[0]), 2); }, {{5, 3}}},
      {"silu", [](Tape &t, std::span<const Var> x) { return weighted_sum(t, silu(x[0]), 2); }, {{5, 3}}},
      {"abs", [](Tape &t, std::span<const Var> x) { return weighted_sum(t, abs(x[0]), 2); }, {{5, 3}}},
      {"concat_cols", [](Tape &t, std::span<const Var> x) {
         const Var parts[] = {x[0], x[1]};
         return weighted_sum(t, concat_cols(parts), 2); }, {{5, 3}, {5, 2}}},
      {"concat_rows", [](Tape &t, std::span<const Var> x) {
         const Var parts[] = {x[0], x[1]};
         return weighted_sum(t, concat_rows(parts), 2); }, {{2, 3}, {4, 3}}},
      {"slice_cols", [](Tape &t, std::span<const Var> x) { return weighted_sum(t, slice_cols(x[0], 1, 2), 2); }, {{5, 4}}},
      {"gather_rows", [rows](Tape &t, std::span<const Var> x) { return weighted_sum(t, gather_rows(x[0], rows), 2); }, {{5, 3}}},
      {"segment_sum", [seg](Tape &t, std::span<const Var> x) { return weighted_sum(t, segment_reduce(x[0], seg, 4, Reduce::Sum), 2); }, {{5, 3}}},
      {"segment_mean", [seg](Tape &t, std::span<const Var> x) { return weighted_sum(t, segment_reduce(x[0], seg, 4, Reduce::Mean), 2); }, {{5, 3}}},
      {"segment_max", [seg](Tape &t, std::span<const Var> x) { return weighted_sum(t, segment_reduce(x[0], seg, 4, Reduce::Max), 2); }, {{5, 3}}},
      {"segment_min", [seg](Tape &t, std::span<const Var> x) { return weighted_sum(t, segment_reduce(x[0], seg, 4, Reduce::Min), 2); }, {{5, 3}}},
      {"scale_rows", [factors](Tape &t, std::span<const Var> x) { return weighted_sum(t, scale_rows(x[0], factors), 2); }, {{5, 3}}},
      {"mean_all", [](Tape &, std::span<const Var> x) { return mean_all(square(x[0])); }, {{5, 3}}},
      {"mse_loss", [](Tape &, std::span<const Var> x) { return mse_loss(x[0], Tensor::matrix(5, 3, 0.25)); }, {{5, 3}}},
      {"cross_entropy", [labels](Tape &, std::span<const Var> x) { return cross_entropy(x[0], labels); }, {{5, 3}}},
  };
  const OpCase &c = cases[static_cast<std::size_t>(GetParam()) % cases.size()];
  Rng rng(100 + GetParam());
  std::vector<Tensor> inputs;
  for (const auto &[r, k] : c.shapes) {
    inputs.push_back(random_tensor(rng, r, k));
  }
  const auto check = gradcheck(c.loss, inputs);
  EXPECT_LT(check.relative_error, kGradTolerance) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, 19));

TEST(Autodiff, EmptySegmentIsZeroRow) {
  Tape tape;
  Var x = tape.variable(Tensor::from_rows({{1.0}, {2.0}}));
  Var s = segment_reduce(x, make_index({0, 0}), 2, Reduce::Max);
  EXPECT_DOUBLE_EQ(s.value()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s.value()(1, 0), 0.0);
}

TEST(Autodiff, CrossEntropyOfUniformLogitsIsLogClasses) {
  Tape tape;
  const std::vector<int> labels{0, 2};
  Var l = cross_entropy(tape.variable(Tensor::matrix(2, 3)), labels);
  EXPECT_NEAR(l.value()[0], std::log(3.0), 1e-15);
}
