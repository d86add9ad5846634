#include "lrgnn/tensor.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace lrgnn;

TEST(Tensor, MatmulAgreesWithTripleLoop) {
  Rng rng(3);
  const Tensor a = support::random_tensor(rng, 7, 5);
  const Tensor b = support::random_tensor(rng, 5, 4);
  const Tensor c = matmul(a, b);
  ASSERT_EQ(c.rows(), 7u);
  ASSERT_EQ(c.cols(), 4u);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) {
        s += a(i, k) * b(k, j);
      }
      EXPECT_NEAR(c(i, j), s, 1e-13);
    }
  }
}

TEST(Tensor, MatmulAccumulateHonoursTransposes) {
  Rng rng(4);
  const Tensor a = support::random_tensor(rng, 5, 3);
  const Tensor b = support::random_tensor(rng, 5, 2);
  Tensor c = Tensor::matrix(3, 2, 1.0);
  matmul_accumulate(c, a, true, b, false);
  const Tensor expect = matmul(transpose(a), b);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(c[i], expect[i] + 1.0, 1e-13);
  }
}

TEST(Tensor, MatmulRejectsMismatchedShapes) {
  EXPECT_THROW(matmul(Tensor::matrix(2, 3), Tensor::matrix(2, 3)), std::invalid_argument);
}

TEST(Tensor, HconcatAndSelectRows) {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor b = Tensor::from_rows({{5}, {6}});
  const Tensor *blocks[] = {&a, &b};
  const Tensor c = hconcat(blocks, 2);
  EXPECT_EQ(c, Tensor::from_rows({{1, 2, 5}, {3, 4, 6}}));
  const std::size_t rows[] = {1, 0, 1};
  EXPECT_EQ(select_rows(c, rows), Tensor::from_rows({{3, 4, 6}, {1, 2, 5}, {3, 4, 6}}));
}

TEST(Tensor, FiniteCheckAndNorms) {
  Tensor t = Tensor::from_rows({{3, 4}});
  EXPECT_TRUE(t.all_finite());
  EXPECT_DOUBLE_EQ(frobenius_norm(t), 5.0);
  t(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  EXPECT_DOUBLE_EQ(max_abs_diff(Tensor::from_rows({{1, 2}}), Tensor::from_rows({{1, 5}})), 3.0);
}
