#include "lrgnn/encoders.hpp"
#include "lrgnn/eigen.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lrgnn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPageRankDamping = 0.85;
// Iterations stop once the max-abs update falls below these; both are
// tighter than the 1e-10 contract so the fixed point is reached to ~1e-12.
constexpr double kPageRankTolerance = 1e-14;
constexpr double kEigenCentralityTolerance = 1e-14;
constexpr int kMaxPowerIterations = 200000;

struct Neighbor {
  std::size_t node;
  std::size_t edge;
};

std::vector<std::vector<Neighbor>> incidence(const AtomGraph &g) {
  std::vector<std::vector<Neighbor>> adj(g.node_count);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    adj[g.edges[e].u].push_back({g.edges[e].v, e});
    adj[g.edges[e].v].push_back({g.edges[e].u, e});
  }
  for (auto &nbrs : adj) {
    std::sort(nbrs.begin(), nbrs.end(),
              [](const Neighbor &a, const Neighbor &b) { return a.node < b.node; });
  }
  return adj;
}

bool is_connected(const AtomGraph &g) {
  if (g.node_count <= 1) {
    return true;
  }
  const auto adj = adjacency(g.node_count, g.edges);
  std::vector<bool> seen(g.node_count, false);
  std::deque<std::size_t> queue{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        queue.push_back(v);
      }
    }
  }
  return count == g.node_count;
}

// Brandes' accumulation from every source; fills unnormalized node and edge
// dependencies (each unordered pair counted from both ends) and hop distances.
struct ShortestPathSummary {
  std::vector<std::vector<int>> dist; // -1 when unreachable
  std::vector<double> node_dependency;
  std::vector<double> edge_dependency;
};

ShortestPathSummary brandes(const AtomGraph &g, const std::vector<std::vector<Neighbor>> &adj) {
  const std::size_t n = g.node_count;
  ShortestPathSummary out;
  out.dist.assign(n, std::vector<int>(n, -1));
  out.node_dependency.assign(n, 0.0);
  out.edge_dependency.assign(g.edges.size(), 0.0);
  std::vector<double> sigma(n), delta(n);
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < n; ++s) {
    auto &dist = out.dist[s];
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    order.clear();
    dist[s] = 0;
    sigma[s] = 1.0;
    std::deque<std::size_t> queue{s};
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      order.push_back(u);
      for (const Neighbor &nb : adj[u]) {
        if (dist[nb.node] < 0) {
          dist[nb.node] = dist[u] + 1;
          queue.push_back(nb.node);
        }
        if (dist[nb.node] == dist[u] + 1) {
          sigma[nb.node] += sigma[u];
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t w = *it;
      for (const Neighbor &nb : adj[w]) {
        const std::size_t v = nb.node;
        if (dist[v] >= 0 && dist[v] == dist[w] - 1) {
          const double c = sigma[v] / sigma[w] * (1.0 + delta[w]);
          out.edge_dependency[nb.edge] += c;
          delta[v] += c;
        }
      }
      if (w != s) {
        out.node_dependency[w] += delta[w];
      }
    }
  }
  return out;
}

std::vector<double> eigenvector_centrality(const std::vector<std::vector<Neighbor>> &adj) {
  const std::size_t n = adj.size();
  std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n))), next(n);
  // Iterating with A + I shares A's Perron vector and avoids the period-2
  // oscillation of bipartite graphs.
  for (int it = 0; it < kMaxPowerIterations; ++it) {
    double norm = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      double s = x[u];
      for (const Neighbor &nb : adj[u]) {
        s += x[nb.node];
      }
      next[u] = s;
      norm += s * s;
    }
    norm = std::sqrt(norm);
    double change = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      next[u] /= norm;
      change = std::max(change, std::abs(next[u] - x[u]));
    }
    x.swap(next);
    if (change < kEigenCentralityTolerance) {
      break;
    }
  }
  return x;
}

std::vector<double> pagerank(const std::vector<std::vector<Neighbor>> &adj) {
  const std::size_t n = adj.size();
  const double nn = static_cast<double>(n);
  std::vector<double> x(n, 1.0 / nn), next(n);
  for (int it = 0; it < kMaxPowerIterations; ++it) {
    double dangling = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      if (adj[u].empty()) {
        dangling += x[u];
      }
    }
    double change = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      double s = 0.0;
      for (const Neighbor &nb : adj[u]) {
        s += x[nb.node] / static_cast<double>(adj[nb.node].size());
      }
      next[u] = (1.0 - kPageRankDamping) / nn + kPageRankDamping * (s + dangling / nn);
      change = std::max(change, std::abs(next[u] - x[u]));
    }
    x.swap(next);
    if (change < kPageRankTolerance) {
      break;
    }
  }
  return x;
}

// Batagelj-Zaversnik bucket peeling.
std::vector<double> core_numbers(const std::vector<std::vector<Neighbor>> &adj) {
  const std::size_t n = adj.size();
  std::vector<std::size_t> deg(n), pos(n), vert(n);
  std::size_t max_deg = 0;
  for (std::size_t u = 0; u < n; ++u) {
    deg[u] = adj[u].size();
    max_deg = std::max(max_deg, deg[u]);
  }
  std::vector<std::size_t> bin(max_deg + 1, 0);
  for (std::size_t u = 0; u < n; ++u) {
    ++bin[deg[u]];
  }
  std::size_t start = 0;
  for (std::size_t d = 0; d <= max_deg; ++d) {
    const std::size_t num = bin[d];
    bin[d] = start;
    start += num;
  }
  for (std::size_t u = 0; u < n; ++u) {
    pos[u] = bin[deg[u]];
    vert[pos[u]] = u;
    ++bin[deg[u]];
  }
  for (std::size_t d = max_deg; d >= 1; --d) {
    bin[d] = bin[d - 1];
  }
  if (!bin.empty()) {
    bin[0] = 0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t v = vert[i];
    for (const Neighbor &nb : adj[v]) {
      const std::size_t u = nb.node;
      if (deg[u] > deg[v]) {
        const std::size_t du = deg[u];
        const std::size_t pu = pos[u];
        const std::size_t pw = bin[du];
        const std::size_t w = vert[pw];
        if (u != w) {
          pos[u] = pw;
          vert[pu] = w;
          pos[w] = pu;
          vert[pw] = u;
        }
        ++bin[du];
        --deg[u];
      }
    }
  }
  return {deg.begin(), deg.end()};
}

std::vector<std::size_t> neighbor_nodes(const std::vector<Neighbor> &nbrs) {
  std::vector<std::size_t> out;
  out.reserve(nbrs.size());
  for (const Neighbor &nb : nbrs) {
    out.push_back(nb.node);
  }
  return out;
}

} // namespace

Tensor chemical_descriptors(std::span<const int> atomic_numbers, const ElementTable &table) {
  Tensor out = Tensor::matrix(atomic_numbers.size(), kElementPropertyCount);
  for (std::size_t i = 0; i < atomic_numbers.size(); ++i) {
    const int z = atomic_numbers[i];
    if (!table.supports(z)) {
      throw std::invalid_argument("chemical_descriptors: unsupported Z=" + std::to_string(z) +
                                  " at node " + std::to_string(i));
    }
    const auto &row = table.row(z);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

ChannelResult node_topological_encodings(const AtomGraph &g) {
  const std::size_t n = g.node_count;
  if (n == 0) {
    throw std::invalid_argument("node_topological_encodings: empty graph");
  }
  ChannelResult out;
  out.values = Tensor::matrix(n, kNodeTopologyWidth);
  Tensor &p = out.values;
  const auto adj = incidence(g);
  const auto paths = brandes(g, adj);
  const bool connected = is_connected(g);
  if (!connected) {
    out.valid = false;
    out.reason = "node encodings: graph is disconnected";
  }
  const auto eig = eigenvector_centrality(adj);
  const auto pr = pagerank(adj);
  const auto core = core_numbers(adj);
  const double betweenness_scale =
      n >= 3 ? 1.0 / (static_cast<double>(n - 1) * static_cast<double>(n - 2)) : 0.0;

  std::vector<std::vector<bool>> linked(n, std::vector<bool>(n, false));
  for (const Edge &e : g.edges) {
    linked[e.u][e.v] = linked[e.v][e.u] = true;
  }

  for (std::size_t u = 0; u < n; ++u) {
    const double deg = static_cast<double>(adj[u].size());
    double total = 0.0, harmonic = 0.0;
    int ecc = 0;
    bool reaches_all = true;
    for (std::size_t v = 0; v < n; ++v) {
      if (v == u) {
        continue;
      }
      const int d = paths.dist[u][v];
      if (d < 0) {
        reaches_all = false;
        continue;
      }
      total += d;
      harmonic += 1.0 / d;
      ecc = std::max(ecc, d);
    }
    double clustering = 0.0;
    if (adj[u].size() >= 2) {
      std::size_t links = 0;
      for (std::size_t a = 0; a < adj[u].size(); ++a) {
        for (std::size_t b = a + 1; b < adj[u].size(); ++b) {
          links += linked[adj[u][a].node][adj[u][b].node] ? 1 : 0;
        }
      }
      clustering = 2.0 * static_cast<double>(links) / (deg * (deg - 1.0));
    }
    p(u, 0) = deg;
    p(u, 1) = total > 0.0 ? static_cast<double>(n - 1) / total : 0.0;
    // Each unordered pair was accumulated from both endpoints.
    p(u, 2) = paths.node_dependency[u] * betweenness_scale;
    p(u, 3) = eig[u];
    p(u, 4) = pr[u];
    p(u, 5) = clustering;
    p(u, 6) = core[u];
    p(u, 7) = harmonic;
    p(u, 8) = reaches_all ? static_cast<double>(ecc) : kInf;
  }
  return out;
}

ChannelResult edge_topological_encodings(const AtomGraph &g) {
  const std::size_t n = g.node_count;
  ChannelResult out;
  out.values = Tensor::matrix(g.edges.size(), kEdgeTopologyWidth);
  if (g.edges.empty()) {
    return out;
  }
  const auto adj = incidence(g);
  const auto paths = brandes(g, adj);
  const double pair_scale = 1.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const std::size_t u = g.edges[e].u, v = g.edges[e].v;
    const auto nu = neighbor_nodes(adj[u]);
    const auto nv = neighbor_nodes(adj[v]);
    std::vector<std::size_t> common, all;
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
    std::set_union(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(all));
    double adamic_adar = 0.0;
    for (std::size_t w : common) {
      const double ln = std::log(static_cast<double>(adj[w].size()));
      if (ln == 0.0) {
        out.valid = false;
        out.reason = "edge encodings: Adamic-Adar common neighbour of degree 1";
        adamic_adar = kInf;
        break;
      }
      adamic_adar += 1.0 / ln;
    }
    out.values(e, 0) = paths.edge_dependency[e] * pair_scale;
    out.values(e, 1) =
        all.empty() ? 0.0 : static_cast<double>(common.size()) / static_cast<double>(all.size());
    out.values(e, 2) = adamic_adar;
    out.values(e, 3) = static_cast<double>(nu.size()) * static_cast<double>(nv.size());
  }
  return out;
}

Tensor graph_laplacian(const AtomGraph &g, LaplacianKind kind) {
  const std::size_t n = g.node_count;
  Tensor lap = Tensor::matrix(n, n);
  std::vector<double> deg(n, 0.0);
  for (const Edge &e : g.edges) {
    deg[e.u] += 1.0;
    deg[e.v] += 1.0;
  }
  if (kind == LaplacianKind::Combinatorial) {
    for (std::size_t i = 0; i < n; ++i) {
      lap(i, i) = deg[i];
    }
    for (const Edge &e : g.edges) {
      lap(e.u, e.v) -= 1.0;
      lap(e.v, e.u) -= 1.0;
    }
    return lap;
  }
  for (std::size_t i = 0; i < n; ++i) {
    lap(i, i) = deg[i] > 0.0 ? 1.0 : 0.0;
  }
  for (const Edge &e : g.edges) {
    const double w = 1.0 / std::sqrt(deg[e.u] * deg[e.v]);
    lap(e.u, e.v) -= w;
    lap(e.v, e.u) -= w;
  }
  return lap;
}

LaplacianPe laplacian_pe(const AtomGraph &g, std::size_t lpe_dim, LaplacianKind kind,
                         double degeneracy_gap) {
  const std::size_t n = g.node_count;
  if (lpe_dim == 0) {
    throw std::invalid_argument("laplacian_pe: dimension must be positive");
  }
  LaplacianPe out;
  out.pe.values = Tensor(std::vector<std::size_t>{n, lpe_dim}, kNaN);
  if (n < lpe_dim + 1) {
    out.pe.valid = false;
    out.pe.reason = "laplacian encodings: fewer than " + std::to_string(lpe_dim) +
                    " nontrivial eigenvectors";
    return out;
  }
  if (!is_connected(g)) {
    out.pe.valid = false;
    out.pe.reason = "laplacian encodings: graph is disconnected";
    return out;
  }
  auto eig = sym_eigendecompose(graph_laplacian(g, kind));
  out.eigenvalues = eig.values;
  out.eigenvectors = eig.vectors;
  // Connected: index 0 is the single null direction; the next lpe_dim are
  // the smallest strictly positive eigenvalues.
  for (std::size_t k = 1; k <= lpe_dim && k + 1 < n; ++k) {
    if (eig.values[k + 1] - eig.values[k] < degeneracy_gap) {
      out.pe.valid = false;
      out.pe.reason = "laplacian encodings: degenerate eigenvalues";
      return out;
    }
  }
  for (std::size_t c = 0; c < lpe_dim; ++c) {
    const std::size_t k = c + 1;
    std::size_t pivot = 0;
    for (std::size_t r = 1; r < n; ++r) {
      if (std::abs(eig.vectors(r, k)) > std::abs(eig.vectors(pivot, k)) + 1e-12) {
        pivot = r;
      }
    }
    const double sign = eig.vectors(pivot, k) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) {
      out.pe.values(r, c) = sign * eig.vectors(r, k);
    }
  }
  return out;
}

EncodingBundle encode_graph(const AtomGraph &g, const ElementTable &table,
                            const EncoderOptions &options) {
  EncodingBundle b;
  const std::size_t n = g.node_count;
  if (options.chemical) {
    if (g.atomic_numbers.size() != n) {
      b.C = Tensor(std::vector<std::size_t>{n, kElementPropertyCount}, kNaN);
      b.invalid_reasons.push_back("chemical descriptors: missing atomic numbers");
    } else {
      try {
        b.C = chemical_descriptors(g.atomic_numbers, table);
      } catch (const std::invalid_argument &e) {
        b.C = Tensor(std::vector<std::size_t>{n, kElementPropertyCount}, kNaN);
        b.invalid_reasons.push_back(std::string("chemical descriptors: ") + e.what());
      }
    }
  } else {
    b.C = Tensor::matrix(n, 0);
  }
  auto p = node_topological_encodings(g);
  b.P = std::move(p.values);
  if (!p.valid) {
    b.invalid_reasons.push_back(p.reason);
  }
  auto e = edge_topological_encodings(g);
  b.G = std::move(e.values);
  if (!e.valid) {
    b.invalid_reasons.push_back(e.reason);
  }
  if (options.lpe_dim > 0) {
    auto l = laplacian_pe(g, options.lpe_dim, options.laplacian, options.degeneracy_gap);
    b.L = std::move(l.pe.values);
    if (!l.pe.valid) {
      b.invalid_reasons.push_back(l.pe.reason);
    }
  } else {
    b.L = Tensor::matrix(n, 0);
  }
  return b;
}

Verdict validate_encodings(const EncodingBundle &bundle) {
  if (!bundle.invalid_reasons.empty()) {
    return {false, bundle.invalid_reasons.front()};
  }
  if (!bundle.C.all_finite()) {
    return {false, "chemical descriptors"};
  }
  if (!bundle.P.all_finite()) {
    return {false, "node encodings"};
  }
  if (!bundle.G.all_finite()) {
    return {false, "edge encodings"};
  }
  if (!bundle.L.all_finite()) {
    return {false, "laplacian encodings"};
  }
  return {};
}

ColumnStats column_stats(const Tensor &columns) {
  const std::size_t n = columns.rows(), m = columns.cols();
  ColumnStats s;
  s.mean.assign(m, 0.0);
  s.std.assign(m, 0.0);
  if (n == 0) {
    return s;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      s.mean[j] += columns(i, j);
    }
  }
  for (double &v : s.mean) {
    v /= static_cast<double>(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = columns(i, j) - s.mean[j];
      s.std[j] += d * d;
    }
  }
  for (double &v : s.std) {
    v = std::sqrt(v / static_cast<double>(n));
  }
  return s;
}

Standardized standardize(const Tensor &columns, const ColumnStats *train_stats) {
  Standardized out;
  out.stats = train_stats ? *train_stats : column_stats(columns);
  if (out.stats.mean.size() != columns.cols()) {
    throw std::invalid_argument("standardize: stats cover " +
                                std::to_string(out.stats.mean.size()) + " columns, input has " +
                                std::to_string(columns.cols()));
  }
  out.values = columns;
  for (std::size_t i = 0; i < columns.rows(); ++i) {
    for (std::size_t j = 0; j < columns.cols(); ++j) {
      out.values(i, j) =
          (columns(i, j) - out.stats.mean[j]) / std::max(out.stats.std[j], kStdFloor);
    }
  }
  return out;
}

Tensor destandardize(const Tensor &columns, const ColumnStats &stats) {
  Tensor out = columns;
  for (std::size_t i = 0; i < columns.rows(); ++i) {
    for (std::size_t j = 0; j < columns.cols(); ++j) {
      out(i, j) = columns(i, j) * std::max(stats.std[j], kStdFloor) + stats.mean[j];
    }
  }
  return out;
}

namespace {

Tensor stack_rows(std::span<const EncodingBundle *const> bundles,
                  const Tensor EncodingBundle::*channel) {
  std::size_t rows = 0, cols = 0;
  for (const EncodingBundle *b : bundles) {
    rows += (b->*channel).rows();
    cols = (b->*channel).cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t r = 0;
  for (const EncodingBundle *b : bundles) {
    const Tensor &t = b->*channel;
    std::copy(t.values().begin(), t.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(r * cols));
    r += t.rows();
  }
  return out;
}

} // namespace

ChannelStats fit_channel_stats(std::span<const EncodingBundle *const> train) {
  ChannelStats s;
  s.C = column_stats(stack_rows(train, &EncodingBundle::C));
  s.P = column_stats(stack_rows(train, &EncodingBundle::P));
  s.G = column_stats(stack_rows(train, &EncodingBundle::G));
  s.L = column_stats(stack_rows(train, &EncodingBundle::L));
  return s;
}

EncodingBundle apply_channel_stats(const EncodingBundle &b, const ChannelStats &stats) {
  EncodingBundle out = b;
  out.C = standardize(b.C, &stats.C).values;
  out.P = standardize(b.P, &stats.P).values;
  out.G = standardize(b.G, &stats.G).values;
  out.L = standardize(b.L, &stats.L).values;
  return out;
}

} // namespace lrgnn
