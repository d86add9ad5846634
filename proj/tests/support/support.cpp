#include "support.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <numeric>

namespace lrgnn::support {

Tensor random_tensor(Rng &rng, std::size_t rows, std::size_t cols, double scale) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double &v : t.values()) {
    v = scale * normal01(rng);
  }
  return t;
}

std::vector<Edge> random_connected_edges(Rng &rng, std::size_t n, double extra) {
  std::vector<std::vector<bool>> linked(n, std::vector<bool>(n, false));
  std::vector<Edge> edges;
  for (std::size_t v = 1; v < n; ++v) {
    const std::size_t u = uniform_index(rng, v);
    linked[u][v] = true;
    edges.push_back({u, v});
  }
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (!linked[u][v] && uniform01(rng) < extra) {
        edges.push_back({u, v});
      }
    }
  }
  std::sort(edges.begin(), edges.end(),
            [](const Edge &a, const Edge &b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
  return edges;
}

AtomGraph random_graph(Rng &rng, const GraphSpec &spec) {
  AtomGraph g;
  g.node_count = spec.min_nodes + uniform_index(rng, spec.max_nodes - spec.min_nodes + 1);
  g.edges = random_connected_edges(rng, g.node_count, spec.extra_edge_prob);
  g.node_features = random_tensor(rng, g.node_count, spec.node_dim);
  g.edge_features = random_tensor(rng, g.edges.size(), spec.edge_dim);
  for (std::size_t i = 0; i < g.node_count; ++i) {
    g.atomic_numbers.push_back(1 + static_cast<int>(uniform_index(rng, 9)));
  }
  if (spec.positions) {
    Tensor pos = Tensor::matrix(g.node_count, 3);
    for (double &v : pos.values()) {
      v = uniform(rng, 0.0, 3.0);
    }
    g.positions = pos;
  }
  for (std::size_t t = 0; t < spec.graph_targets; ++t) {
    g.graph_targets.push_back(normal01(rng));
  }
  return g;
}

Sample random_sample(Rng &rng, const GraphSpec &spec, std::size_t lpe_dim) {
  Sample s;
  s.graph = random_graph(rng, spec);
  EncodingBundle b;
  const std::size_t n = s.graph.node_count;
  b.C = random_tensor(rng, n, 15);
  b.P = random_tensor(rng, n, 9);
  b.G = random_tensor(rng, s.graph.edges.size(), 4);
  b.L = random_tensor(rng, n, lpe_dim);
  s.encodings = b;
  return s;
}

Sample permute_sample(const Sample &s, std::span<const std::size_t> perm) {
  Sample out;
  out.graph = permute(s.graph, perm);
  if (s.encodings) {
    const auto inv = inverse_permutation(perm);
    EncodingBundle b = *s.encodings;
    b.C = select_rows(b.C, inv);
    b.P = select_rows(b.P, inv);
    b.L = select_rows(b.L, inv);
    out.encodings = b;
  }
  return out;
}

std::vector<std::size_t> random_permutation(Rng &rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  shuffle(std::span<std::size_t>(p), rng);
  return p;
}

Tensor random_rotation(Rng &rng) {
  double q[4];
  double norm = 0.0;
  for (double &c : q) {
    c = normal01(rng);
    norm += c * c;
  }
  norm = std::sqrt(norm);
  for (double &c : q) {
    c /= norm;
  }
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return Tensor::from_rows({{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
                            {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
                            {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}});
}

Tensor rigid_motion(const Tensor &positions, const Tensor &rotation, const double shift[3]) {
  Tensor out = matmul(positions, transpose(rotation));
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out(i, c) += shift[c];
    }
  }
  return out;
}

GradCheck gradcheck(const LossFn &loss, const std::vector<Tensor> &inputs, double h) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor &t : inputs) {
      leaves.push_back(tape.variable(t));
    }
    Var l = loss(tape, leaves);
    tape.backward(l);
    for (const Var &v : leaves) {
      analytic.push_back(tape.grad(v));
    }
  }
  auto evaluate = [&](const std::vector<Tensor> &xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor &t : xs) {
      leaves.push_back(tape.constant(t));
    }
    return loss(tape, leaves).value()[0];
  };
  double diff = 0.0, scale = 0.0;
  GradCheck out;
  std::vector<Tensor> xs = inputs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t k = 0; k < xs[i].size(); ++k) {
      const double orig = xs[i][k];
      xs[i][k] = orig + h;
      const double up = evaluate(xs);
      xs[i][k] = orig - h;
      const double down = evaluate(xs);
      xs[i][k] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[i][k];
      diff += (a - numeric) * (a - numeric);
      scale += a * a + numeric * numeric;
      out.max_abs_error = std::max(out.max_abs_error, std::abs(a - numeric));
    }
  }
  out.relative_error = std::sqrt(diff) / std::max(std::sqrt(scale), 1e-12);
  return out;
}

GradCheck gradcheck_parameters(ParameterStore &store, const ParamLossFn &loss, double h) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var l = loss(tape, store);
    tape.backward(l);
    analytic = tape.gradients(store.all());
  }
  ParameterStore &work = store;
  double diff = 0.0, scale = 0.0;
  GradCheck out;
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t k = 0; k < work[p].value.size(); ++k) {
      const double orig = work[p].value[k];
      work[p].value[k] = orig + h;
      double up, down;
      {
        Tape tape;
        up = loss(tape, work).value()[0];
      }
      work[p].value[k] = orig - h;
      {
        Tape tape;
        down = loss(tape, work).value()[0];
      }
      work[p].value[k] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[p][k];
      diff += (a - numeric) * (a - numeric);
      scale += a * a + numeric * numeric;
      out.max_abs_error = std::max(out.max_abs_error, std::abs(a - numeric));
    }
  }
  out.relative_error = std::sqrt(diff) / std::max(std::sqrt(scale), 1e-12);
  return out;
}

std::string search_space_violation(const ModelConfig &c, bool has_pos, bool attention, bool encodings) {
  auto in = [](std::size_t v, std::initializer_list<std::size_t> set) {
    return std::find(set.begin(), set.end(), v) != set.end();
  };
  const bool two_d = c.mpnn_kind == MpnnKind::EdgeConditionedSum || c.mpnn_kind == MpnnKind::MultiAggregator;
  if (!(two_d || (has_pos && c.mpnn_kind == MpnnKind::Geometric))) {
    return "family";
  }
  if (c.attention != attention || c.encodings != encodings || c.has_pos != has_pos) {
    return "flags";
  }
  if (!attention) {
    if (c.num_conv_layers < 1 || c.num_conv_layers > 6) {
      return "layers";
    }
    if (c.heads != 0) {
      return "heads";
    }
    if (!encodings && (c.hidden_dim < 4 || c.hidden_dim > 32 || c.edge_embed_dim != 0)) {
      return "widths";
    }
    if (encodings && (c.hidden_dim < 16 || c.hidden_dim > 64 ||
                      !in(c.edge_embed_dim, {0, 4, 5, 6, 7, 8, 9, 10, 11, 12}))) {
      return "widths";
    }
    return {};
  }
  if (c.num_conv_layers < 1 || c.num_conv_layers > 3) {
    return "layers";
  }
  if (!in(c.heads, {2, 4, 8}) || c.hidden_dim % c.heads != 0) {
    return "heads";
  }
  if (!encodings && (!in(c.hidden_dim, {8, 16, 24, 32, 40, 48}) ||
                     !in(c.edge_embed_dim, {0, 4, 5, 6, 8, 9, 10, 11, 12}))) {
    return "widths";
  }
  if (encodings && (!in(c.hidden_dim, {16, 24, 32, 40, 48, 56, 64}) ||
                    !in(c.edge_embed_dim, {0, 4, 5, 6, 7, 8, 9, 10, 11, 12}))) {
    return "widths";
  }
  return {};
}

std::vector<std::vector<int>> floyd_warshall(std::size_t n, std::span<const Edge> edges) {
  constexpr int kFar = 1 << 20;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, kFar));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0;
  }
  for (const Edge &e : edges) {
    d[e.u][e.v] = d[e.v][e.u] = 1;
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
      }
    }
  }
  for (auto &row : d) {
    for (int &x : row) {
      x = x >= kFar ? -1 : x;
    }
  }
  return d;
}

namespace {

struct PathWalker {
  const std::vector<std::vector<int>> &dist;
  const std::vector<std::vector<std::pair<std::size_t, std::size_t>>> &adj; // (node, edge)
  std::size_t target;
  std::vector<std::size_t> nodes, edges;
  std::vector<std::vector<std::size_t>> path_nodes, path_edges;

  void walk(std::size_t at) {
    if (at == target) {
      path_nodes.push_back(nodes);
      path_edges.push_back(edges);
      return;
    }
    for (const auto &[next, e] : adj[at]) {
      // Every step of a shortest path moves one hop closer to the target.
      if (dist[next][target] == dist[at][target] - 1) {
        nodes.push_back(next);
        edges.push_back(e);
        walk(next);
        nodes.pop_back();
        edges.pop_back();
      }
    }
  }
};

} // namespace

PathCounts enumerate_shortest_paths(std::size_t n, std::span<const Edge> edges) {
  const auto dist = floyd_warshall(n, edges);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    adj[edges[e].u].push_back({edges[e].v, e});
    adj[edges[e].v].push_back({edges[e].u, e});
  }
  PathCounts out{std::vector<double>(n, 0.0), std::vector<double>(edges.size(), 0.0)};
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = s + 1; t < n; ++t) {
      if (dist[s][t] < 0) {
        continue;
      }
      PathWalker w{dist, adj, t, {}, {}, {}, {}};
      w.walk(s);
      const double total = static_cast<double>(w.path_nodes.size());
      for (std::size_t p = 0; p < w.path_nodes.size(); ++p) {
        for (std::size_t v : w.path_nodes[p]) {
          if (v != t) {
            out.node[v] += 1.0 / total;
          }
        }
        for (std::size_t e : w.path_edges[p]) {
          out.edge[e] += 1.0 / total;
        }
      }
    }
  }
  return out;
}

std::vector<double> core_numbers_by_pruning(std::size_t n, std::span<const Edge> edges) {
  std::vector<double> core(n, 0.0);
  for (std::size_t k = 1; k <= n; ++k) {
    std::vector<bool> alive(n, true);
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t v = 0; v < n; ++v) {
        if (!alive[v]) {
          continue;
        }
        std::size_t deg = 0;
        for (const Edge &e : edges) {
          if ((e.u == v && alive[e.v]) || (e.v == v && alive[e.u])) {
            ++deg;
          }
        }
        if (deg < k) {
          alive[v] = false;
          changed = true;
        }
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (alive[v]) {
        core[v] = static_cast<double>(k);
      }
    }
  }
  return core;
}

std::vector<double> perron_vector(std::size_t n, std::span<const Edge> edges) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const Edge &e : edges) {
    a(static_cast<Eigen::Index>(e.u), static_cast<Eigen::Index>(e.v)) = 1.0;
    a(static_cast<Eigen::Index>(e.v), static_cast<Eigen::Index>(e.u)) = 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(n) - 1);
  if (v.sum() < 0.0) {
    v = -v;
  }
  v /= v.norm();
  return {v.data(), v.data() + v.size()};
}

std::vector<double> pagerank_linear(std::size_t n, std::span<const Edge> edges, double damping) {
  const auto ni = static_cast<Eigen::Index>(n);
  std::vector<double> deg(n, 0.0);
  for (const Edge &e : edges) {
    deg[e.u] += 1.0;
    deg[e.v] += 1.0;
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(ni, ni);
  for (const Edge &e : edges) {
    const auto u = static_cast<Eigen::Index>(e.u), v = static_cast<Eigen::Index>(e.v);
    m(u, v) -= damping / deg[e.v];
    m(v, u) -= damping / deg[e.u];
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Constant(ni, (1.0 - damping) / static_cast<double>(n));
  Eigen::VectorXd x = m.fullPivLu().solve(rhs);
  return {x.data(), x.data() + x.size()};
}

Tensor node_encoding_oracle(const AtomGraph &g) {
  const std::size_t n = g.node_count;
  const auto dist = floyd_warshall(n, g.edges);
  const auto paths = enumerate_shortest_paths(n, g.edges);
  const auto core = core_numbers_by_pruning(n, g.edges);
  const auto eig = n == 1 ? std::vector<double>{1.0} : perron_vector(n, g.edges);
  const auto pr = n == 1 ? std::vector<double>{1.0} : pagerank_linear(n, g.edges, 0.85);
  std::vector<std::vector<bool>> a(n, std::vector<bool>(n, false));
  for (const Edge &e : g.edges) {
    a[e.u][e.v] = a[e.v][e.u] = true;
  }
  Tensor p = Tensor::matrix(n, 9);
  const double pairs = n >= 3 ? static_cast<double>((n - 1) * (n - 2)) / 2.0 : 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    double deg = 0.0, total = 0.0, harmonic = 0.0, ecc = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      deg += a[u][v] ? 1.0 : 0.0;
      if (v != u) {
        total += dist[u][v];
        harmonic += 1.0 / dist[u][v];
        ecc = std::max(ecc, static_cast<double>(dist[u][v]));
      }
    }
    // Triangles through u counted as ordered neighbour pairs.
    double closed = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t w = 0; w < n; ++w) {
        closed += a[u][v] && a[u][w] && a[v][w] ? 1.0 : 0.0;
      }
    }
    p(u, 0) = deg;
    p(u, 1) = total > 0.0 ? static_cast<double>(n - 1) / total : 0.0;
    p(u, 2) = pairs > 0.0 ? paths.node[u] / pairs : 0.0;
    p(u, 3) = eig[u];
    p(u, 4) = pr[u];
    p(u, 5) = deg >= 2.0 ? closed / (deg * (deg - 1.0)) : 0.0;
    p(u, 6) = core[u];
    p(u, 7) = harmonic;
    p(u, 8) = ecc;
  }
  return p;
}

Tensor edge_encoding_oracle(const AtomGraph &g) {
  const std::size_t n = g.node_count;
  const auto paths = enumerate_shortest_paths(n, g.edges);
  std::vector<std::uint32_t> nbr(n, 0);
  for (const Edge &e : g.edges) {
    nbr[e.u] |= 1u << e.v;
    nbr[e.v] |= 1u << e.u;
  }
  Tensor out = Tensor::matrix(g.edges.size(), 4);
  const double pairs = static_cast<double>(n * (n - 1)) / 2.0;
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const std::uint32_t gu = nbr[g.edges[k].u], gv = nbr[g.edges[k].v];
    const std::uint32_t common = gu & gv, all = gu | gv;
    double aa = 0.0;
    for (std::size_t w = 0; w < n; ++w) {
      if (common & (1u << w)) {
        aa += 1.0 / std::log(static_cast<double>(std::popcount(nbr[w])));
      }
    }
    out(k, 0) = paths.edge[k] / pairs;
    out(k, 1) = all ? static_cast<double>(std::popcount(common)) / std::popcount(all) : 0.0;
    out(k, 2) = aa;
    out(k, 3) = static_cast<double>(std::popcount(gu) * std::popcount(gv));
  }
  return out;
}

} // namespace lrgnn::support
