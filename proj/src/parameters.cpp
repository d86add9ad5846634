#include "lrgnn/parameters.hpp"
#include "lrgnn/random.hpp"

#include <cmath>

namespace lrgnn {

Slot ParameterStore::add(std::string name, Tensor value) {
  params_.push_back({std::move(name), std::move(value)});
  return params_.size() - 1;
}

Slot ParameterStore::add_weight(std::string name, std::size_t fan_in, std::size_t fan_out,
                                std::mt19937_64 &rng) {
  Tensor w = Tensor::matrix(fan_in, fan_out);
  const double limit =
      fan_in + fan_out > 0 ? std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)) : 0.0;
  for (double &v : w.values()) {
    v = uniform(rng, -limit, limit);
  }
  return add(std::move(name), std::move(w));
}

Slot ParameterStore::add_bias(std::string name, std::size_t width) {
  return add(std::move(name), Tensor::matrix(1, width));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const Parameter &p : params_) {
    n += p.value.size();
  }
  return n;
}

} // namespace lrgnn
