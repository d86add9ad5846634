#include "lrgnn/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lrgnn {

namespace {

std::size_t product(const std::vector<std::size_t> &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_)) {
    throw std::invalid_argument("tensor value count " + std::to_string(values_.size()) +
                                " does not match shape " + shape_string());
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n == 0 ? 0 : rows.begin()->size();
  Tensor t = matrix(n, m);
  std::size_t r = 0;
  for (const auto &row : rows) {
    if (row.size() != m) {
      throw std::invalid_argument("ragged rows in Tensor::from_rows");
    }
    std::size_t c = 0;
    for (double v : row) {
      t(r, c++) = v;
    }
    ++r;
  }
  return t;
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    os << (i ? "," : "") << shape_[i];
  }
  os << ')';
  return os.str();
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap view(const Tensor &t) {
  return ConstMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

} // namespace

Tensor matmul(const Tensor &a, const Tensor &b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul shape mismatch " + a.shape_string() + " x " +
                                b.shape_string());
  }
  Tensor c = Tensor::matrix(a.rows(), b.cols());
  MutMap(c.values().data(), static_cast<Eigen::Index>(c.rows()),
         static_cast<Eigen::Index>(c.cols()))
      .noalias() = view(a) * view(b);
  return c;
}

void matmul_accumulate(Tensor &c, const Tensor &a, bool transpose_a, const Tensor &b,
                       bool transpose_b) {
  const std::size_t n = transpose_a ? a.cols() : a.rows();
  const std::size_t ka = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t m = transpose_b ? b.rows() : b.cols();
  if (ka != kb || c.rows() != n || c.cols() != m) {
    throw std::invalid_argument("matmul_accumulate shape mismatch " + a.shape_string() + " x " +
                                b.shape_string() + " into " + c.shape_string());
  }
  MutMap out(c.values().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  if (transpose_a && transpose_b) {
    out.noalias() += view(a).transpose() * view(b).transpose();
  } else if (transpose_a) {
    out.noalias() += view(a).transpose() * view(b);
  } else if (transpose_b) {
    out.noalias() += view(a) * view(b).transpose();
  } else {
    out.noalias() += view(a) * view(b);
  }
}

Tensor transpose(const Tensor &a) {
  Tensor t = Tensor::matrix(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      t(j, i) = a(i, j);
    }
  }
  return t;
}

Tensor hconcat(std::span<const Tensor *const> blocks, std::size_t rows) {
  std::size_t width = 0;
  for (const Tensor *b : blocks) {
    if (b->rows() != rows) {
      throw std::invalid_argument("hconcat row mismatch: expected " + std::to_string(rows) +
                                  ", got " + std::to_string(b->rows()));
    }
    width += b->cols();
  }
  Tensor out = Tensor::matrix(rows, width);
  std::size_t offset = 0;
  for (const Tensor *b : blocks) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < b->cols(); ++j) {
        out(i, offset + j) = (*b)(i, j);
      }
    }
    offset += b->cols();
  }
  return out;
}

Tensor select_rows(const Tensor &a, std::span<const std::size_t> rows) {
  Tensor out = Tensor::matrix(rows.size(), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = a.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

double frobenius_norm(const Tensor &a) {
  double s = 0.0;
  for (double v : a.values()) {
    s += v * v;
  }
  return std::sqrt(s);
}

double max_abs_diff(const Tensor &a, const Tensor &b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff shape mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

} // namespace lrgnn
