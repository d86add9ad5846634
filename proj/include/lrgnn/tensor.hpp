#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lrgnn {

// Dense row-major array of 64-bit reals. Most of the library works on rank-2
// tensors (matrices); scalars are stored as 1x1.
class Tensor {
public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }

  const std::vector<std::size_t> &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // Rank-2 accessors.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const {
    return shape_.empty() ? 0 : (shape_.size() < 2 ? 1 : shape_[1]);
  }

  double &operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double &operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols(), cols()};
  }

  std::vector<double> &values() { return values_; }
  const std::vector<double> &values() const { return values_; }

  bool all_finite() const;
  bool same_shape(const Tensor &other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

  friend bool operator==(const Tensor &a, const Tensor &b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// Plain (non-differentiable) helpers shared by encoders and tests.
Tensor matmul(const Tensor &a, const Tensor &b);
// c += op(a) * op(b), op being the transpose when requested.
void matmul_accumulate(Tensor &c, const Tensor &a, bool transpose_a, const Tensor &b,
                       bool transpose_b);
Tensor transpose(const Tensor &a);
Tensor hconcat(std::span<const Tensor *const> blocks, std::size_t rows);
Tensor select_rows(const Tensor &a, std::span<const std::size_t> rows);
double frobenius_norm(const Tensor &a);
double max_abs_diff(const Tensor &a, const Tensor &b);

} // namespace lrgnn
