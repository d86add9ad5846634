#include "lrgnn/layers.hpp"
#include "lrgnn/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace lrgnn {

MessageGraph MessageGraph::build(std::size_t node_count, std::span<const Edge> edges) {
  std::vector<std::size_t> dst, src, und;
  dst.reserve(2 * edges.size());
  src.reserve(2 * edges.size());
  und.reserve(2 * edges.size());
  std::vector<double> degree(node_count, 0.0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [u, v] = edges[e];
    if (u >= node_count || v >= node_count) {
      throw std::out_of_range("MessageGraph: edge " + std::to_string(e) + " out of range");
    }
    dst.push_back(u);
    src.push_back(v);
    und.push_back(e);
    dst.push_back(v);
    src.push_back(u);
    und.push_back(e);
    degree[u] += 1.0;
    degree[v] += 1.0;
  }
  MessageGraph g;
  g.node_count = node_count;
  g.dst = make_index(std::move(dst));
  g.src = make_index(std::move(src));
  g.undirected = make_index(std::move(und));
  g.degree = std::make_shared<const std::vector<double>>(std::move(degree));
  return g;
}

double bond_angle(const Tensor &positions, std::size_t u, std::size_t v, std::size_t w) {
  std::array<double, 3> a{}, b{};
  for (std::size_t k = 0; k < 3; ++k) {
    a[k] = positions(v, k) - positions(u, k);
    b[k] = positions(w, k) - positions(u, k);
  }
  const double cx = a[1] * b[2] - a[2] * b[1];
  const double cy = a[2] * b[0] - a[0] * b[2];
  const double cz = a[0] * b[1] - a[1] * b[0];
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
}

GeometricBasis geometric_basis(const Tensor &positions, const MessageGraph &graph,
                               const RadialBasis &radial, const AngularBasis &angular) {
  if (positions.rank() != 2 || positions.cols() != 3 || positions.rows() != graph.node_count) {
    throw std::invalid_argument("geometric_basis: positions must be node_count x 3");
  }
  if (radial.count < 2 || !(radial.cutoff > 0.0)) {
    throw std::invalid_argument("geometric_basis: radial basis needs >= 2 centres and a positive cutoff");
  }
  const std::size_t m = graph.message_count();
  GeometricBasis out;
  out.radial = Tensor::matrix(m, radial.count);
  out.angular = Tensor::matrix(m, angular.width());
  out.distance = Tensor::matrix(m, 1);
  const double spacing = radial.cutoff / static_cast<double>(radial.count - 1);
  const double inv_two_var = 1.0 / (2.0 * spacing * spacing);

  std::vector<std::vector<std::size_t>> neighbours(graph.node_count);
  for (std::size_t i = 0; i < m; ++i) {
    neighbours[(*graph.dst)[i]].push_back((*graph.src)[i]);
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t u = (*graph.dst)[i], v = (*graph.src)[i];
    const auto ru = positions.row(u), rv = positions.row(v);
    const double r = std::hypot(rv[0] - ru[0], rv[1] - ru[1], rv[2] - ru[2]);
    if (!(r > 0.0)) {
      throw std::invalid_argument("geometric_basis: nodes " + std::to_string(u) + " and " +
                                  std::to_string(v) + " coincide");
    }
    out.distance(i, 0) = r;
    for (std::size_t k = 0; k < radial.count; ++k) {
      const double d = r - spacing * static_cast<double>(k);
      out.radial(i, k) = std::exp(-d * d * inv_two_var);
    }
    if (!angular.enabled) {
      continue;
    }
    for (std::size_t w : neighbours[u]) {
      if (w == v) {
        continue;
      }
      const double theta = bond_angle(positions, u, v, w);
      for (std::size_t k = 0; k <= angular.order; ++k) {
        out.angular(i, k) += std::cos(static_cast<double>(k) * theta);
      }
    }
  }
  return out;
}

std::string to_string(MpnnKind k) {
  switch (k) {
  case MpnnKind::EdgeConditionedSum:
    return "edge-conditioned-sum";
  case MpnnKind::MultiAggregator:
    return "multi-aggregator";
  case MpnnKind::Geometric:
    return "geometric";
  }
  return "?";
}

std::string to_string(Aggregator a) {
  switch (a) {
  case Aggregator::Sum:
    return "sum";
  case Aggregator::Mean:
    return "mean";
  case Aggregator::Max:
    return "max";
  case Aggregator::Multi:
    return "multi";
  }
  return "?";
}

MpnnKind parse_mpnn_kind(const std::string &s) {
  for (MpnnKind k : {MpnnKind::EdgeConditionedSum, MpnnKind::MultiAggregator, MpnnKind::Geometric}) {
    if (to_string(k) == s) {
      return k;
    }
  }
  throw ConfigError("unknown mpnn kind '" + s + "'");
}

Aggregator parse_aggregator(const std::string &s) {
  for (Aggregator a : {Aggregator::Sum, Aggregator::Mean, Aggregator::Max, Aggregator::Multi}) {
    if (to_string(a) == s) {
      return a;
    }
  }
  throw ConfigError("unknown aggregator '" + s + "'");
}

Aggregator default_aggregator(MpnnKind k) {
  return k == MpnnKind::MultiAggregator ? Aggregator::Multi : Aggregator::Sum;
}

MpnnLayer MpnnLayer::create(ParameterStore &store, const std::string &name, MpnnKind kind,
                            Aggregator aggregator, std::size_t in_dim, std::size_t out_dim,
                            std::size_t edge_dim, RadialBasis radial, AngularBasis angular,
                            Rng &rng) {
  if (in_dim == 0 || out_dim == 0) {
    throw ConfigError(name + ": layer widths must be positive");
  }
  MpnnLayer l;
  l.kind = kind;
  l.aggregator = aggregator;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  l.edge_dim = edge_dim;
  l.radial = radial;
  l.angular = angular;
  std::size_t message_in = 2 * in_dim + edge_dim;
  if (kind == MpnnKind::Geometric) {
    l.w_radial = store.add_weight(name + ".radial", radial.count, out_dim, rng);
    if (angular.enabled) {
      l.w_angular = store.add_weight(name + ".angular", angular.width(), out_dim, rng);
    }
    message_in += out_dim;
  }
  l.w_message = store.add_weight(name + ".message.w", message_in, out_dim, rng);
  l.b_message = store.add_bias(name + ".message.b", out_dim);
  l.w_update1 = store.add_weight(name + ".update1.w", in_dim + l.aggregate_width(), out_dim, rng);
  l.b_update1 = store.add_bias(name + ".update1.b", out_dim);
  l.w_update2 = store.add_weight(name + ".update2.w", out_dim, out_dim, rng);
  l.b_update2 = store.add_bias(name + ".update2.b", out_dim);
  return l;
}

Var geometric_edge_embed(Tape &tape, const ParameterStore &store, const MpnnLayer &layer,
                         const GeometricBasis &basis) {
  if (layer.kind != MpnnKind::Geometric) {
    throw std::invalid_argument("geometric_edge_embed: layer is not geometric");
  }
  Var ebar = matmul(tape.constant(basis.radial), store.bind(tape, layer.w_radial));
  if (layer.angular.enabled) {
    ebar = add(ebar, matmul(tape.constant(basis.angular), store.bind(tape, layer.w_angular)));
  }
  return ebar;
}

Var mpnn_forward(Tape &tape, const ParameterStore &store, const MpnnLayer &layer, Var h,
                 Var edge_attr, const MessageGraph &graph, const GeometricBasis *basis) {
  if (h.cols() != layer.in_dim || h.rows() != graph.node_count) {
    throw std::invalid_argument("mpnn_forward: node input " + h.value().shape_string() +
                                " does not match layer width " + std::to_string(layer.in_dim));
  }
  std::vector<Var> parts{gather_rows(h, graph.dst), gather_rows(h, graph.src)};
  if (layer.edge_dim > 0) {
    if (!edge_attr.valid() || edge_attr.cols() != layer.edge_dim) {
      throw std::invalid_argument("mpnn_forward: edge attributes must have width " +
                                  std::to_string(layer.edge_dim));
    }
    parts.push_back(gather_rows(edge_attr, graph.undirected));
  }
  if (layer.kind == MpnnKind::Geometric) {
    if (basis == nullptr) {
      throw std::invalid_argument("mpnn_forward: geometric layer needs a geometric basis");
    }
    parts.push_back(geometric_edge_embed(tape, store, layer, *basis));
  }
  Var z = add_row(matmul(concat_cols(parts), store.bind(tape, layer.w_message)),
                  store.bind(tape, layer.b_message));
  Var messages = layer.kind == MpnnKind::MultiAggregator ? z : silu(z);

  const std::size_t n = graph.node_count;
  Var aggregated;
  switch (layer.aggregator) {
  case Aggregator::Sum:
    aggregated = segment_reduce(messages, graph.dst, n, Reduce::Sum);
    break;
  case Aggregator::Mean:
    aggregated = segment_reduce(messages, graph.dst, n, Reduce::Mean);
    break;
  case Aggregator::Max:
    aggregated = segment_reduce(messages, graph.dst, n, Reduce::Max);
    break;
  case Aggregator::Multi: {
    auto amplification = std::make_shared<std::vector<double>>(n);
    for (std::size_t i = 0; i < n; ++i) {
      (*amplification)[i] = std::log((*graph.degree)[i] + 1.0);
    }
    Var mean = segment_reduce(messages, graph.dst, n, Reduce::Mean);
    std::array<Var, 4> stats{mean, segment_reduce(messages, graph.dst, n, Reduce::Max),
                             segment_reduce(messages, graph.dst, n, Reduce::Min),
                             scale_rows(mean, amplification)};
    aggregated = concat_cols(stats);
    break;
  }
  }

  std::array<Var, 2> update_in{h, aggregated};
  Var hidden = silu(add_row(matmul(concat_cols(update_in), store.bind(tape, layer.w_update1)),
                            store.bind(tape, layer.b_update1)));
  Var update =
      add_row(matmul(hidden, store.bind(tape, layer.w_update2)), store.bind(tape, layer.b_update2));
  return layer.in_dim == layer.out_dim ? add(h, update) : update;
}

AttentionLayer AttentionLayer::create(ParameterStore &store, const std::string &name,
                                      std::size_t in_dim, std::size_t out_dim, std::size_t heads,
                                      Rng &rng) {
  if (heads == 0) {
    throw ConfigError(name + ": attention needs at least one head");
  }
  if (out_dim % heads != 0) {
    throw ConfigError(name + ": hidden_dim " + std::to_string(out_dim) +
                      " is not divisible by global_attn_heads " + std::to_string(heads) +
                      " (per-head width must be an integer)");
  }
  return create_with_head_dim(store, name, in_dim, out_dim / heads, heads, out_dim, rng);
}

AttentionLayer AttentionLayer::create_with_head_dim(ParameterStore &store, const std::string &name,
                                                    std::size_t in_dim, std::size_t head_dim,
                                                    std::size_t heads, std::size_t out_dim,
                                                    Rng &rng) {
  if (heads == 0 || head_dim == 0) {
    throw ConfigError(name + ": attention needs positive head count and width");
  }
  AttentionLayer a;
  a.in_dim = in_dim;
  a.head_dim = head_dim;
  a.heads = heads;
  a.out_dim = out_dim;
  const std::size_t inner = heads * head_dim;
  a.w_query = store.add_weight(name + ".query", in_dim, inner, rng);
  a.w_key = store.add_weight(name + ".key", in_dim, inner, rng);
  a.w_value = store.add_weight(name + ".value", in_dim, inner, rng);
  a.w_out = store.add_weight(name + ".out", inner, out_dim, rng);
  return a;
}

namespace {

// softmax(Q_h K_h^T * scale) for rows [begin, end) and head columns
// [c0, c0 + dh).
Tensor head_scores(const Tensor &q, const Tensor &k, std::size_t begin, std::size_t end,
                   std::size_t c0, std::size_t dh, double scale) {
  const std::size_t n = end - begin;
  Tensor s = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < dh; ++c) {
        dot += q(begin + i, c0 + c) * k(begin + j, c0 + c);
      }
      s(i, j) = dot * scale;
    }
  }
  return softmax_rows(s);
}

} // namespace

Var segment_attention(Var q, Var k, Var v, std::size_t heads, const Offsets &offsets) {
  const Tensor &qv = q.value(), &kv = k.value(), &vv = v.value();
  if (!qv.same_shape(kv) || !qv.same_shape(vv) || heads == 0 || qv.cols() % heads != 0) {
    throw std::invalid_argument("segment_attention: Q/K/V shapes or head count inconsistent");
  }
  if (offsets->empty() || offsets->back() != qv.rows()) {
    throw std::invalid_argument("segment_attention: offsets do not cover all rows");
  }
  const std::size_t dh = qv.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t segments = offsets->size() - 1;
  auto weights = std::make_shared<std::vector<Tensor>>();
  weights->reserve(segments * heads);
  Tensor out(qv.shape(), 0.0);
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t b = (*offsets)[s], e = (*offsets)[s + 1];
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor a = head_scores(qv, kv, b, e, h * dh, dh, scale);
      for (std::size_t i = 0; i < e - b; ++i) {
        for (std::size_t j = 0; j < e - b; ++j) {
          const double aij = a(i, j);
          for (std::size_t c = 0; c < dh; ++c) {
            out(b + i, h * dh + c) += aij * vv(b + j, h * dh + c);
          }
        }
      }
      weights->push_back(std::move(a));
    }
  }
  const std::size_t pq = q.id(), pk = k.id(), pv = v.id();
  return q.tape()->record(
      std::move(out), {pq, pk, pv}, "segment_attention",
      [pq, pk, pv, heads, dh, scale, offsets, weights](Tape &t, std::size_t self) {
        const Tensor &g = t.grad_buffer(self);
        const Tensor &qv = t.value(pq), &kv = t.value(pk), &vv = t.value(pv);
        const bool need_q = t.requires_grad(pq), need_k = t.requires_grad(pk),
                   need_v = t.requires_grad(pv);
        Tensor dq(qv.shape(), 0.0), dk(kv.shape(), 0.0), dv(vv.shape(), 0.0);
        const std::size_t segments = offsets->size() - 1;
        for (std::size_t s = 0; s < segments; ++s) {
          const std::size_t b = (*offsets)[s], e = (*offsets)[s + 1], n = e - b;
          for (std::size_t h = 0; h < heads; ++h) {
            const Tensor &a = (*weights)[s * heads + h];
            const std::size_t c0 = h * dh;
            // dA = dO V^T ; dS = A * (dA - rowsum(dA * A))
            Tensor ds = Tensor::matrix(n, n);
            for (std::size_t i = 0; i < n; ++i) {
              double row_dot = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                double da = 0.0;
                for (std::size_t c = 0; c < dh; ++c) {
                  da += g(b + i, c0 + c) * vv(b + j, c0 + c);
                }
                ds(i, j) = da;
                row_dot += da * a(i, j);
              }
              for (std::size_t j = 0; j < n; ++j) {
                ds(i, j) = a(i, j) * (ds(i, j) - row_dot) * scale;
              }
            }
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t j = 0; j < n; ++j) {
                const double aij = a(i, j), sij = ds(i, j);
                for (std::size_t c = 0; c < dh; ++c) {
                  dv(b + j, c0 + c) += aij * g(b + i, c0 + c);
                  dq(b + i, c0 + c) += sij * kv(b + j, c0 + c);
                  dk(b + j, c0 + c) += sij * qv(b + i, c0 + c);
                }
              }
            }
          }
        }
        auto acc = [&t](std::size_t id, const Tensor &d) {
          Tensor &buf = t.grad_buffer(id);
          for (std::size_t i = 0; i < buf.size(); ++i) {
            buf[i] += d[i];
          }
        };
        if (need_q) {
          acc(pq, dq);
        }
        if (need_k) {
          acc(pk, dk);
        }
        if (need_v) {
          acc(pv, dv);
        }
      });
}

Var multi_head_attention(Tape &tape, const ParameterStore &store, const AttentionLayer &layer,
                         Var h, const Offsets &offsets) {
  if (h.cols() != layer.in_dim) {
    throw std::invalid_argument("multi_head_attention: input width " + std::to_string(h.cols()) +
                                " != " + std::to_string(layer.in_dim));
  }
  Var q = matmul(h, store.bind(tape, layer.w_query));
  Var k = matmul(h, store.bind(tape, layer.w_key));
  Var v = matmul(h, store.bind(tape, layer.w_value));
  Var heads = segment_attention(q, k, v, layer.heads, offsets);
  return matmul(heads, store.bind(tape, layer.w_out));
}

std::vector<Tensor> attention_weights(const ParameterStore &store, const AttentionLayer &layer,
                                      const Tensor &h, std::size_t begin, std::size_t end) {
  const Tensor q = matmul(h, store[layer.w_query].value);
  const Tensor k = matmul(h, store[layer.w_key].value);
  const double scale = 1.0 / std::sqrt(static_cast<double>(layer.head_dim));
  std::vector<Tensor> out;
  for (std::size_t hd = 0; hd < layer.heads; ++hd) {
    out.push_back(head_scores(q, k, begin, end, hd * layer.head_dim, layer.head_dim, scale));
  }
  return out;
}

GpsBlock GpsBlock::create(ParameterStore &store, const std::string &name, MpnnKind kind,
                          Aggregator aggregator, std::size_t width, std::size_t edge_dim,
                          std::size_t heads, RadialBasis radial, AngularBasis angular, Rng &rng) {
  GpsBlock b;
  b.mpnn = MpnnLayer::create(store, name + ".mpnn", kind, aggregator, width, width, edge_dim,
                             radial, angular, rng);
  b.attention = AttentionLayer::create(store, name + ".attention", width, width, heads, rng);
  b.w_fuse1 = store.add_weight(name + ".fuse1.w", width, 2 * width, rng);
  b.b_fuse1 = store.add_bias(name + ".fuse1.b", 2 * width);
  b.w_fuse2 = store.add_weight(name + ".fuse2.w", 2 * width, width, rng);
  b.b_fuse2 = store.add_bias(name + ".fuse2.b", width);
  return b;
}

GpsOutput gps_block(Tape &tape, const ParameterStore &store, const GpsBlock &block, Var x, Var e,
                    const MessageGraph &graph, const GeometricBasis *basis,
                    const Offsets &offsets) {
  GpsOutput out;
  out.local = mpnn_forward(tape, store, block.mpnn, x, e, graph, basis);
  out.global = multi_head_attention(tape, store, block.attention, x, offsets);
  Var fused = add(out.local, out.global);
  Var hidden = relu(add_row(matmul(fused, store.bind(tape, block.w_fuse1)),
                            store.bind(tape, block.b_fuse1)));
  out.x = add_row(matmul(hidden, store.bind(tape, block.w_fuse2)), store.bind(tape, block.b_fuse2));
  out.e = e;
  return out;
}

std::string to_string(PoolMode m) {
  switch (m) {
  case PoolMode::Min:
    return "min";
  case PoolMode::Max:
    return "max";
  case PoolMode::Sum:
    return "sum";
  case PoolMode::Mean:
    return "mean";
  }
  return "?";
}

PoolMode parse_pool_mode(const std::string &s) {
  for (PoolMode m : {PoolMode::Min, PoolMode::Max, PoolMode::Sum, PoolMode::Mean}) {
    if (to_string(m) == s) {
      return m;
    }
  }
  throw ConfigError("unknown pooling mode '" + s + "'");
}

Var pool(Var h, const Index &graph_index, std::size_t num_graphs, PoolMode mode) {
  std::vector<std::size_t> counts(num_graphs, 0);
  for (std::size_t g : *graph_index) {
    if (g >= num_graphs) {
      throw std::out_of_range("pool: graph index out of range");
    }
    ++counts[g];
  }
  for (std::size_t g = 0; g < num_graphs; ++g) {
    if (counts[g] == 0) {
      throw std::invalid_argument("pool: graph " + std::to_string(g) + " has no nodes");
    }
  }
  switch (mode) {
  case PoolMode::Min:
    return segment_reduce(h, graph_index, num_graphs, Reduce::Min);
  case PoolMode::Max:
    return segment_reduce(h, graph_index, num_graphs, Reduce::Max);
  case PoolMode::Sum:
    return segment_reduce(h, graph_index, num_graphs, Reduce::Sum);
  case PoolMode::Mean:
    return segment_reduce(h, graph_index, num_graphs, Reduce::Mean);
  }
  throw std::logic_error("pool: unreachable");
}

double mean_pairwise_cosine(const Tensor &h) {
  const std::size_t n = h.rows();
  if (n < 2) {
    throw std::invalid_argument("oversmoothing_diagnostic: needs at least two nodes");
  }
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : h.row(i)) {
      norms[i] += v * v;
    }
    norms[i] = std::sqrt(norms[i]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (norms[i] == 0.0 || norms[j] == 0.0) {
        continue;
      }
      double dot = 0.0;
      for (std::size_t c = 0; c < h.cols(); ++c) {
        dot += h(i, c) * h(j, c);
      }
      total += dot / (norms[i] * norms[j]);
    }
  }
  return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

std::vector<double> oversmoothing_diagnostic(std::span<const Tensor> per_layer) {
  std::vector<double> out;
  out.reserve(per_layer.size());
  for (const Tensor &h : per_layer) {
    out.push_back(mean_pairwise_cosine(h));
  }
  return out;
}

Tensor mean_aggregate(const Tensor &h, const AtomGraph &g) {
  Tensor out = h;
  std::vector<double> count(g.node_count, 1.0);
  for (const Edge &e : g.edges) {
    for (std::size_t c = 0; c < h.cols(); ++c) {
      out(e.u, c) += h(e.v, c);
      out(e.v, c) += h(e.u, c);
    }
    count[e.u] += 1.0;
    count[e.v] += 1.0;
  }
  for (std::size_t i = 0; i < g.node_count; ++i) {
    for (double &v : out.row(i)) {
      v /= count[i];
    }
  }
  return out;
}

} // namespace lrgnn
