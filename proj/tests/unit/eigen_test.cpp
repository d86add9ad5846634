#include "lrgnn/eigen.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lrgnn;

namespace {

double orthonormality_error(const Tensor &v) {
  const Tensor g = matmul(transpose(v), v);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) {
      worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

} // namespace

TEST(SymEigen, IdentityHasUnitSpectrum) {
  const auto d = sym_eigendecompose(Tensor::from_rows({{1, 0}, {0, 1}}));
  EXPECT_DOUBLE_EQ(d.values[0], 1.0);
  EXPECT_DOUBLE_EQ(d.values[1], 1.0);
  EXPECT_LT(orthonormality_error(d.vectors), 1e-12);
}

TEST(SymEigen, PathLaplacianSpectrumIsZeroOneThree) {
  const auto d = sym_eigendecompose(Tensor::from_rows({{1, -1, 0}, {-1, 2, -1}, {0, -1, 1}}));
  EXPECT_NEAR(d.values[0], 0.0, 1e-12);
  EXPECT_NEAR(d.values[1], 1.0, 1e-12);
  EXPECT_NEAR(d.values[2], 3.0, 1e-12);
}

TEST(SymEigen, RandomSymmetricReconstructs) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 9);
    Tensor a = support::random_tensor(rng, n, n);
    a = matmul(a, transpose(a));
    const auto d = sym_eigendecompose(a);
    for (std::size_t k = 1; k < n; ++k) {
      EXPECT_LE(d.values[k - 1], d.values[k]);
    }
    EXPECT_LT(orthonormality_error(d.vectors), 1e-10);
    Tensor lambda = Tensor::matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
      lambda(k, k) = d.values[k];
    }
    const Tensor back = matmul(matmul(d.vectors, lambda), transpose(d.vectors));
    EXPECT_LT(max_abs_diff(back, a), 1e-9 * (1.0 + frobenius_norm(a)));
  }
}

TEST(SymEigen, RejectsAsymmetricInput) {
  EXPECT_THROW(sym_eigendecompose(Tensor::from_rows({{1, 2}, {0, 1}})), std::invalid_argument);
}
