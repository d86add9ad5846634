#include "lrgnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lrgnn {

const Tensor &Var::value() const {
  if (tape_ == nullptr) {
    throw std::logic_error("Var::value on an unbound variable");
  }
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.rule = "constant";
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.rule = "variable";
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(const Parameter &p) {
  if (auto it = bound_.find(&p); it != bound_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.value = p.value;
  n.rule = "parameter";
  n.requires_grad = true;
  Var v = push(std::move(n));
  bound_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, std::string_view rule,
                 BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.rule = rule;
  for (std::size_t p : parents) {
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  n.parents = std::move(parents);
  if (n.requires_grad) {
    n.backward = std::move(backward);
  }
  return push(std::move(n));
}

Tensor &Tape::grad_buffer(std::size_t id) {
  Node &n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) {
    throw std::invalid_argument("backward: loss belongs to a different tape");
  }
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                loss.value().shape_string());
  }
  if (consumed_) {
    throw std::logic_error("backward: tape already consumed");
  }
  consumed_ = true;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node &n = nodes_[id];
    if (!n.has_grad || !n.backward) {
      continue;
    }
    n.backward(*this, id);
  }
}

Tensor Tape::grad(Var v) const {
  const Node &n = nodes_[v.id()];
  return n.has_grad ? n.grad : Tensor(n.value.shape(), 0.0);
}

Tensor Tape::grad(const Parameter &p) const {
  if (auto it = bound_.find(&p); it != bound_.end()) {
    const Node &n = nodes_[it->second];
    if (n.has_grad) {
      return n.grad;
    }
  }
  return Tensor(p.value.shape(), 0.0);
}

std::vector<Tensor> Tape::gradients(std::span<const Parameter> params) const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter &p : params) {
    out.push_back(grad(p));
  }
  return out;
}

std::size_t Tape::count(std::string_view rule) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [&](const Node &n) { return n.rule == rule; }));
}

namespace {

Tape &same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw std::invalid_argument("operands live on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const Tensor &a, const Tensor &b, const char *op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

void accumulate(Tensor &dst, const Tensor &src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += src[i];
  }
}

template <typename F> Var unary(Var a, std::string_view rule, F &&fwd_bwd) {
  // fwd_bwd(x) -> pair(y, dy/dx)
  const Tensor &x = a.value();
  Tensor y(x.shape(), 0.0);
  auto dydx = std::make_shared<Tensor>(x.shape(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto [v, d] = fwd_bwd(x[i]);
    y[i] = v;
    (*dydx)[i] = d;
  }
  const std::size_t pa = a.id();
  return a.tape()->record(std::move(y), {pa}, rule, [pa, dydx](Tape &t, std::size_t self) {
    if (!t.requires_grad(pa)) {
      return;
    }
    const Tensor &g = t.grad_buffer(self);
    Tensor &ga = t.grad_buffer(pa);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * (*dydx)[i];
    }
  });
}

} // namespace

Var matmul(Var a, Var b) {
  Tape &t = same_tape(a, b);
  Tensor c = lrgnn::matmul(a.value(), b.value());
  const std::size_t pa = a.id(), pb = b.id();
  return t.record(std::move(c), {pa, pb}, "matmul", [pa, pb](Tape &t, std::size_t self) {
    const Tensor &g = t.grad_buffer(self);
    if (t.requires_grad(pa)) {
      matmul_accumulate(t.grad_buffer(pa), g, false, t.value(pb), true);
    }
    if (t.requires_grad(pb)) {
      matmul_accumulate(t.grad_buffer(pb), t.value(pa), true, g, false);
    }
  });
}

Var add(Var a, Var b) {
  Tape &t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor c = a.value();
  accumulate(c, b.value());
  const std::size_t pa = a.id(), pb = b.id();
  return t.record(std::move(c), {pa, pb}, "add", [pa, pb](Tape &t, std::size_t self) {
    const Tensor &g = t.grad_buffer(self);
    if (t.requires_grad(pa)) {
      accumulate(t.grad_buffer(pa), g);
    }
    if (t.requires_grad(pb)) {
      accumulate(t.grad_buffer(pb), g);
    }
  });
}

Var sub(Var a, Var b) {
  Tape &t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] -= b.value()[i];
  }
  const std::size_t pa = a.id(), pb = b.id();
  return t.record(std::move(c), {pa, pb}, "sub", [pa, pb](Tape &t, std::size_t self) {
    const Tensor &g = t.grad_buffer(self);
    if (t.requires_grad(pa)) {
      accumulate(t.grad_buffer(pa), g);
    }
    if (t.requires_grad(pb)) {
      Tensor &gb = t.grad_buffer(pb);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[i] -= g[i];
      }
    }
  });
}

Var mul(Var a, Var b) {
  Tape &t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] *= b.value()[i];
  }
  const std::size_t pa = a.id(), pb = b.id();
  return t.record(std::move(c), {pa, pb}, "mul", [pa, pb](Tape &t, std::size_t self) {
    const Tensor &g = t.grad_buffer(self);
    if (t.requires_grad(pa)) {
      Tensor &ga = t.grad_buffer(pa);
      const Tensor &vb = t.value(pb);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * vb[i];
      }
    }
    if (t.requires_grad(pb)) {
      Tensor &gb = t.grad_buffer(pb);
      const Tensor &va = t.value(pa);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[i] += g[i] * va[i];
      }
    }
  });
}

Var scale(Var a, double factor) {
  return unary(a, "scale", [factor](double x) { return std::pair{factor * x, factor}; });
}

Var add_row(Var a, Var row) {
  Tape &t = same_tape(a, row);
  const Tensor &r = row.value();
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw std::invalid_argument("add_row: row shape " + r.shape_string() +
                                " does not broadcast over " + a.value().shape_string());
  }
  Tensor c = a.value();
  const std::size_t m = c.cols();
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      c(i, j) += r[j];
    }
  }
  const std::size_t pa = a.id(), pr = row.id();
  return t.record(std::move(c), {pa, pr}, "add_row", [pa, pr](Tape &t, std::size_t self) {
    const Tensor &g = t.grad_buffer(self);
    if (t.requires_grad(pa)) {
      accumulate(t.grad_buffer(pa), g);
    }
    if (t.requires_grad(pr)) {
      Tensor &gr = t.grad_buffer(pr);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) {
          gr[j] += g(i, j);
        }
      }
    }
  });
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) {
    return x > 0.0 ? std::pair{x, 1.0} : std::pair{0.0, 0.0};
  });
}

Var silu(Var a) {
  return unary(a, "silu", [](double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return std::pair{x * s, s * (1.0 + x * (1.0 - s))};
  });
}

Var abs(Var a) {
  return unary(a, "abs", [](double x) {
    return std::pair{std::abs(x), x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0)};
  });
}

Var square(Var a) {
  return unary(a, "square", [](double x) { return std::pair{x * x, 2.0 * x}; });
}

Tensor softmax_rows(const Tensor &m) {
  Tensor out(m.shape(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (double &v : o) {
      v /= z;
    }
  }
  return out;
}

Var softmax_rows(Var a) {
  Tensor y = softmax_rows(a.value());
  const std::size_t pa = a.id();
  return a.tape()->record(std::move(y), {pa}, "softmax_rows", [pa](Tape &t, std::size_t self) {
    if (!t.requires_grad(pa)) {
      return;
    }
    const Tensor &g = t.grad_buffer(self);
    const Tensor &y = t.value(self);
    Tensor &ga = t.grad_buffer(pa);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) {
        dot += g(i, j) * y(i, j);
      }
      for (std::size_t j = 0; j < y.cols(); ++j) {
        ga(i, j) += y(i, j) * (g(i, j) - dot);
      }
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_cols: no operands");
  }
  Tape &t = *parts.front().tape();
  const std::size_t n = parts.front().rows();
  std::vector<const Tensor *> blocks;
  std::vector<std::size_t> parents;
  auto offsets = std::make_shared<std::vector<std::size_t>>();
  std::size_t off = 0;
  for (const Var &p : parts) {
    if (p.tape() != &t) {
      throw std::invalid_argument("concat_cols: operands on different tapes");
    }
    blocks.push_back(&p.value());
    parents.push_back(p.id());
    offsets->push_back(off);
    off += p.cols();
  }
  Tensor c = hconcat(blocks, n);
  auto ids = parents;
  return t.record(std::move(c), std::move(parents), "concat_cols",
                  [ids, offsets](Tape &t, std::size_t self) {
                    const Tensor &g = t.grad_buffer(self);
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (!t.requires_grad(ids[k])) {
                        continue;
                      }
                      Tensor &gp = t.grad_buffer(ids[k]);
                      const std::size_t w = gp.cols();
                      for (std::size_t i = 0; i < gp.rows(); ++i) {
                        for (std::size_t j = 0; j < w; ++j) {
                          gp(i, j) += g(i, (*offsets)[k] + j);
                        }
                      }
                    }
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor &x = a.value();
  if (begin + count > x.cols()) {
    throw std::invalid_argument("slice_cols: range exceeds width " + std::to_string(x.cols()));
  }
  Tensor y = Tensor::matrix(x.rows(), count);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < count; ++j) {
      y(i, j) = x(i, begin + j);
    }
  }
  const std::size_t pa = a.id();
  return a.tape()->record(std::move(y), {pa}, "slice_cols",
                          [pa, begin, count](Tape &t, std::size_t self) {
                            if (!t.requires_grad(pa)) {
                              return;
                            }
                            const Tensor &g = t.grad_buffer(self);
                            Tensor &ga = t.grad_buffer(pa);
                            for (std::size_t i = 0; i < g.rows(); ++i) {
                              for (std::size_t j = 0; j < count; ++j) {
                                ga(i, begin + j) += g(i, j);
                              }
                            }
                          });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_rows: no operands");
  }
  Tape &t = *parts.front().tape();
  const std::size_t m = parts.front().cols();
  std::size_t n = 0;
  std::vector<std::size_t> parents;
  for (const Var &p : parts) {
    if (p.cols() != m) {
      throw std::invalid_argument("concat_rows: width mismatch");
    }
    n += p.rows();
    parents.push_back(p.id());
  }
  Tensor c = Tensor::matrix(n, m);
  std::size_t r = 0;
  for (const Var &p : parts) {
    const auto &v = p.value().values();
    std::copy(v.begin(), v.end(), c.values().begin() + static_cast<std::ptrdiff_t>(r * m));
    r += p.rows();
  }
  auto ids = parents;
  return t.record(std::move(c), std::move(parents), "concat_rows",
                  [ids](Tape &t, std::size_t self) {
                    const Tensor &g = t.grad_buffer(self);
                    std::size_t offset = 0;
                    for (std::size_t id : ids) {
                      const std::size_t len = t.value(id).size();
                      if (t.requires_grad(id)) {
                        Tensor &gp = t.grad_buffer(id);
                        for (std::size_t i = 0; i < len; ++i) {
                          gp[i] += g[offset + i];
                        }
                      }
                      offset += len;
                    }
                  });
}

Var gather_rows(Var a, Index rows) {
  const Tensor &x = a.value();
  for (std::size_t r : *rows) {
    if (r >= x.rows()) {
      throw std::out_of_range("gather_rows: row " + std::to_string(r) + " out of range");
    }
  }
  Tensor y = select_rows(x, *rows);
  const std::size_t pa = a.id();
  return a.tape()->record(std::move(y), {pa}, "gather_rows", [pa, rows](Tape &t, std::size_t self) {
    if (!t.requires_grad(pa)) {
      return;
    }
    const Tensor &g = t.grad_buffer(self);
    Tensor &ga = t.grad_buffer(pa);
    const std::size_t m = g.cols();
    for (std::size_t i = 0; i < rows->size(); ++i) {
      const std::size_t r = (*rows)[i];
      for (std::size_t j = 0; j < m; ++j) {
        ga(r, j) += g(i, j);
      }
    }
  });
}

Var segment_reduce(Var a, Index segment, std::size_t num_segments, Reduce mode) {
  const Tensor &x = a.value();
  if (segment->size() != x.rows()) {
    throw std::invalid_argument("segment_reduce: index length " +
                                std::to_string(segment->size()) + " != rows " +
                                std::to_string(x.rows()));
  }
  const std::size_t m = x.cols();
  Tensor y = Tensor::matrix(num_segments, m);
  auto counts = std::make_shared<std::vector<std::size_t>>(num_segments, 0);
  for (std::size_t s : *segment) {
    if (s >= num_segments) {
      throw std::out_of_range("segment_reduce: segment id out of range");
    }
    ++(*counts)[s];
  }
  // For max/min: row index that won each (segment, column); ties keep the first.
  auto winner = std::make_shared<std::vector<std::size_t>>();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  if (mode == Reduce::Max || mode == Reduce::Min) {
    winner->assign(num_segments * m, kNone);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const std::size_t s = (*segment)[i];
      for (std::size_t j = 0; j < m; ++j) {
        std::size_t &w = (*winner)[s * m + j];
        const double v = x(i, j);
        if (w == kNone || (mode == Reduce::Max ? v > x(w, j) : v < x(w, j))) {
          w = i;
        }
      }
    }
    for (std::size_t s = 0; s < num_segments; ++s) {
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t w = (*winner)[s * m + j];
        y(s, j) = w == kNone ? 0.0 : x(w, j);
      }
    }
  } else {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const std::size_t s = (*segment)[i];
      for (std::size_t j = 0; j < m; ++j) {
        y(s, j) += x(i, j);
      }
    }
    if (mode == Reduce::Mean) {
      for (std::size_t s = 0; s < num_segments; ++s) {
        if ((*counts)[s] > 0) {
          const double inv = 1.0 / static_cast<double>((*counts)[s]);
          for (std::size_t j = 0; j < m; ++j) {
            y(s, j) *= inv;
          }
        }
      }
    }
  }
  const std::size_t pa = a.id();
  std::string_view rule = mode == Reduce::Sum    ? "segment_sum"
                          : mode == Reduce::Mean ? "segment_mean"
                          : mode == Reduce::Max  ? "segment_max"
                                                 : "segment_min";
  return a.tape()->record(
      std::move(y), {pa}, rule, [pa, segment, counts, winner, mode](Tape &t, std::size_t self) {
        if (!t.requires_grad(pa)) {
          return;
        }
        const Tensor &g = t.grad_buffer(self);
        Tensor &ga = t.grad_buffer(pa);
        const std::size_t m = g.cols();
        if (mode == Reduce::Max || mode == Reduce::Min) {
          for (std::size_t s = 0; s < g.rows(); ++s) {
            for (std::size_t j = 0; j < m; ++j) {
              const std::size_t w = (*winner)[s * m + j];
              if (w != kNone) {
                ga(w, j) += g(s, j);
              }
            }
          }
          return;
        }
        for (std::size_t i = 0; i < ga.rows(); ++i) {
          const std::size_t s = (*segment)[i];
          const double f = mode == Reduce::Mean ? 1.0 / static_cast<double>((*counts)[s]) : 1.0;
          for (std::size_t j = 0; j < m; ++j) {
            ga(i, j) += f * g(s, j);
          }
        }
      });
}

Var scale_rows(Var a, std::shared_ptr<const std::vector<double>> factors) {
  const Tensor &x = a.value();
  if (factors->size() != x.rows()) {
    throw std::invalid_argument("scale_rows: factor count mismatch");
  }
  Tensor y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (double &v : y.row(i)) {
      v *= (*factors)[i];
    }
  }
  const std::size_t pa = a.id();
  return a.tape()->record(std::move(y), {pa}, "scale_rows", [pa, factors](Tape &t, std::size_t self) {
    if (!t.requires_grad(pa)) {
      return;
    }
    const Tensor &g = t.grad_buffer(self);
    Tensor &ga = t.grad_buffer(pa);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) {
        ga(i, j) += (*factors)[i] * g(i, j);
      }
    }
  });
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) {
    s += v;
  }
  const std::size_t pa = a.id();
  return a.tape()->record(Tensor::scalar(s), {pa}, "sum_all", [pa](Tape &t, std::size_t self) {
    if (!t.requires_grad(pa)) {
      return;
    }
    const double g = t.grad_buffer(self)[0];
    for (double &v : t.grad_buffer(pa).values()) {
      v += g;
    }
  });
}

Var mean_all(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) {
    throw std::invalid_argument("mean_all: empty tensor");
  }
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var mse_loss(Var prediction, const Tensor &target) {
  const Tensor &p = prediction.value();
  require_same_shape(p, target, "mse_loss");
  if (p.size() == 0) {
    throw std::invalid_argument("mse_loss: empty prediction");
  }
  auto residual = std::make_shared<Tensor>(p);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    (*residual)[i] -= target[i];
    s += (*residual)[i] * (*residual)[i];
  }
  const double inv = 1.0 / static_cast<double>(p.size());
  const std::size_t pa = prediction.id();
  return prediction.tape()->record(Tensor::scalar(s * inv), {pa}, "mse_loss",
                                   [pa, residual, inv](Tape &t, std::size_t self) {
                                     if (!t.requires_grad(pa)) {
                                       return;
                                     }
                                     const double g = t.grad_buffer(self)[0];
                                     Tensor &ga = t.grad_buffer(pa);
                                     for (std::size_t i = 0; i < ga.size(); ++i) {
                                       ga[i] += 2.0 * inv * g * (*residual)[i];
                                     }
                                   });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor &z = logits.value();
  if (labels.size() != z.rows() || z.rows() == 0) {
    throw std::invalid_argument("cross_entropy: label count mismatch");
  }
  auto probs = std::make_shared<Tensor>(softmax_rows(z));
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double s = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const int c = labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= z.cols()) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(c) + " out of range");
    }
    auto row = z.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double lse = 0.0;
    for (double v : row) {
      lse += std::exp(v - mx);
    }
    s += mx + std::log(lse) - row[static_cast<std::size_t>(c)];
  }
  const double inv = 1.0 / static_cast<double>(z.rows());
  const std::size_t pa = logits.id();
  return logits.tape()->record(Tensor::scalar(s * inv), {pa}, "cross_entropy",
                               [pa, probs, lab, inv](Tape &t, std::size_t self) {
                                 if (!t.requires_grad(pa)) {
                                   return;
                                 }
                                 const double g = t.grad_buffer(self)[0];
                                 Tensor &ga = t.grad_buffer(pa);
                                 for (std::size_t i = 0; i < ga.rows(); ++i) {
                                   for (std::size_t j = 0; j < ga.cols(); ++j) {
                                     const double onehot =
                                         static_cast<std::size_t>((*lab)[i]) == j ? 1.0 : 0.0;
                                     ga(i, j) += g * inv * ((*probs)(i, j) - onehot);
                                   }
                                 }
                               });
}

} // namespace lrgnn
