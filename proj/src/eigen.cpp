#include "lrgnn/eigen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lrgnn {

namespace {

constexpr double kSymmetryTolerance = 1e-10;
constexpr double kOffDiagonalThreshold = 1e-12;
constexpr int kMaxSweeps = 100;

double off_diagonal_norm(const Tensor &a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (i != j) {
        s += a(i, j) * a(i, j);
      }
    }
  }
  return std::sqrt(s);
}

} // namespace

EigenDecomposition sym_eigendecompose(const Tensor &input) {
  const std::size_t n = input.rows();
  if (input.rank() != 2 || n != input.cols() || n == 0) {
    throw std::invalid_argument("sym_eigendecompose needs a non-empty square matrix, got " +
                                input.shape_string());
  }
  double asym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      asym = std::max(asym, std::abs(input(i, j) - input(j, i)));
    }
  }
  if (asym > kSymmetryTolerance) {
    std::ostringstream os;
    os << "sym_eigendecompose: matrix is not symmetric (max asymmetry " << asym << ")";
    throw std::invalid_argument(os.str());
  }

  // Work on the exactly symmetrized copy so rotations stay consistent.
  Tensor a = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a(i, j) = 0.5 * (input(i, j) + input(j, i));
    }
  }
  Tensor v = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    v(i, i) = 1.0;
  }

  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    if (off_diagonal_norm(a) < kOffDiagonalThreshold) {
      break;
    }
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) {
          continue;
        }
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Rutishauser's stable rotation angle.
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        if (s == 0.0) {
          continue;
        }
        rotated = true;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    if (!rotated) {
      break;
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  EigenDecomposition out;
  out.sweeps = sweep;
  out.values.resize(n);
  out.vectors = Tensor::matrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) {
      out.vectors(r, c) = v(r, order[c]);
    }
  }
  return out;
}

} // namespace lrgnn
