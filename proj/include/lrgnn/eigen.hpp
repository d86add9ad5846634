#pragma once

#include "lrgnn/tensor.hpp"

#include <vector>

namespace lrgnn {

struct EigenDecomposition {
  std::vector<double> values; // ascending
  Tensor vectors;             // column i pairs with values[i]
  int sweeps = 0;
};

// Cyclic Jacobi rotations on a symmetric matrix. Throws std::invalid_argument
// when |A - A^T| exceeds 1e-10 anywhere (message carries the magnitude).
EigenDecomposition sym_eigendecompose(const Tensor &a);

} // namespace lrgnn
