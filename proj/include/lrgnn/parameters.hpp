#pragma once

#include "lrgnn/autodiff.hpp"

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lrgnn {

// Slot index of a Parameter inside a ParameterStore.
using Slot = std::size_t;

// Owns every weight tensor of a model. Layers refer to weights by slot so a
// model (and its store) can be copied by value.
class ParameterStore {
public:
  Slot add(std::string name, Tensor value);
  // Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)).
  Slot add_weight(std::string name, std::size_t fan_in, std::size_t fan_out, std::mt19937_64 &rng);
  Slot add_bias(std::string name, std::size_t width);

  Parameter &operator[](Slot s) { return params_[s]; }
  const Parameter &operator[](Slot s) const { return params_[s]; }
  Var bind(Tape &tape, Slot s) const { return tape.param(params_[s]); }

  std::size_t size() const { return params_.size(); }
  std::span<Parameter> all() { return params_; }
  std::span<const Parameter> all() const { return params_; }
  std::size_t scalar_count() const;

private:
  std::vector<Parameter> params_;
};

} // namespace lrgnn
