#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every operation of one forward pass. Leaves are constants,
// free variables, or bindings of model Parameters. backward() seeds the scalar
// loss with 1 and walks the tape in reverse, accumulating gradients additively
// over fan-out. Tapes are single-use and confined to one thread.

#include "lrgnn/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lrgnn {

struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

class Var {
public:
  Var() = default;

  const Tensor &value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape *tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

private:
  friend class Tape;
  Var(Tape *tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape *tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
public:
  // Called with the tape and the id of the node whose gradient is complete.
  using BackwardFn = std::function<void(Tape &, std::size_t)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf bound to a parameter; repeated calls with the same parameter return
  // the same node so its gradient accumulates across uses.
  Var param(const Parameter &p);

  Var record(Tensor value, std::vector<std::size_t> parents, std::string_view rule,
             BackwardFn backward);

  void backward(Var loss);

  const Tensor &value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer for node `id`, allocated as zeros on first access.
  Tensor &grad_buffer(std::size_t id);
  // Zero tensor of the right shape when the node received no gradient.
  Tensor grad(Var v) const;
  Tensor grad(const Parameter &p) const;
  std::vector<Tensor> gradients(std::span<const Parameter> params) const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t count(std::string_view rule) const;

private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    std::string_view rule;
    BackwardFn backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter *, std::size_t> bound_;
  bool consumed_ = false;
};

using Index = std::shared_ptr<const std::vector<std::size_t>>;

inline Index make_index(std::vector<std::size_t> idx) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(idx));
}

enum class Reduce { Sum, Mean, Max, Min };

// Differentiable operations. All take rank-2 operands.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_row(Var a, Var row); // broadcast a 1xm row over every row of a
Var relu(Var a);
Var silu(Var a);
Var abs(Var a);
Var square(Var a);
Var softmax_rows(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, Index rows);
// out[segment[i]] (+)= a[i]; empty segments yield zero rows.
Var segment_reduce(Var a, Index segment, std::size_t num_segments, Reduce mode);
// Multiplies row i by a constant factor.
Var scale_rows(Var a, std::shared_ptr<const std::vector<double>> factors);
Var sum_all(Var a);
Var mean_all(Var a);
Var mse_loss(Var prediction, const Tensor &target);
// Mean negative log-likelihood of integer class labels under row logits.
Var cross_entropy(Var logits, std::span<const int> labels);

// Plain softmax used by both the tape op and attention inspection.
Tensor softmax_rows(const Tensor &m);

} // namespace lrgnn
