#include "lrgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace lrgnn {

namespace {

void require(bool ok, const std::string &what) {
  if (!ok) {
    throw std::invalid_argument(what);
  }
}

void require_rows(const Tensor &t, std::size_t rows, const char *field) {
  const bool empty_ok = t.rank() == 0 && rows == 0;
  require(empty_ok || (t.rank() == 2 && t.rows() == rows),
          std::string(field) + " has " + std::to_string(t.rows()) + " rows, expected " +
              std::to_string(rows));
}

} // namespace

void AtomGraph::validate() const {
  require_rows(node_features, node_count, "node_features");
  require_rows(edge_features, edges.size(), "edge_features");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge &e = edges[i];
    require(e.u != e.v, "edge " + std::to_string(i) + " is a self-loop");
    require(e.u < e.v, "edge " + std::to_string(i) + " is not canonical (u < v)");
    require(e.v < node_count, "edge " + std::to_string(i) + " references node " +
                                  std::to_string(e.v) + " beyond node_count");
    require(seen.emplace(e.u, e.v).second, "edge " + std::to_string(i) + " is a duplicate");
  }
  if (positions) {
    require(positions->rank() == 2 && positions->rows() == node_count && positions->cols() == 3,
            "positions must be node_count x 3");
    if (cutoff) {
      for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto a = positions->row(edges[i].u);
        const auto b = positions->row(edges[i].v);
        const double d = std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
        require(d < *cutoff, "edge " + std::to_string(i) + " is longer than the cutoff");
      }
    }
  }
  require(atomic_numbers.empty() || atomic_numbers.size() == node_count,
          "atomic_numbers must be empty or have node_count entries");
  if (node_targets) {
    require_rows(*node_targets, node_count, "node_targets");
  }
  if (cutoff) {
    require(*cutoff > 0.0 && std::isfinite(*cutoff), "cutoff must be positive");
  }
}

RadiusEdges build_radius_graph(const Tensor &positions, double cutoff) {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) {
    throw std::invalid_argument("build_radius_graph: cutoff must be positive and finite");
  }
  if (positions.rank() != 2 || positions.cols() != 3 || positions.rows() == 0) {
    throw std::invalid_argument("build_radius_graph: positions must be N x 3 with N >= 1, got " +
                                positions.shape_string());
  }
  const std::size_t n = positions.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (double c : positions.row(i)) {
      if (!std::isfinite(c)) {
        throw std::invalid_argument("build_radius_graph: non-finite coordinate at node " +
                                    std::to_string(i));
      }
    }
  }
  RadiusEdges out;
  for (std::size_t u = 0; u < n; ++u) {
    const auto a = positions.row(u);
    for (std::size_t v = u + 1; v < n; ++v) {
      const auto b = positions.row(v);
      const double d = std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]);
      if (d < cutoff) {
        out.edges.push_back({u, v});
        out.distances.push_back(d);
      }
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> adjacency(std::size_t node_count,
                                                std::span<const Edge> edges) {
  std::vector<std::vector<std::size_t>> adj(node_count);
  for (const Edge &e : edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  for (auto &nbrs : adj) {
    std::sort(nbrs.begin(), nbrs.end());
  }
  return adj;
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || inv[perm[i]] != perm.size()) {
      throw std::invalid_argument("permutation is not a bijection on 0.." +
                                  std::to_string(perm.size() - 1));
    }
    inv[perm[i]] = i;
  }
  return inv;
}

AtomGraph permute(const AtomGraph &g, std::span<const std::size_t> perm) {
  if (perm.size() != g.node_count) {
    throw std::invalid_argument("permutation has " + std::to_string(perm.size()) +
                                " entries for a graph of " + std::to_string(g.node_count) +
                                " nodes");
  }
  const std::vector<std::size_t> inv = inverse_permutation(perm);
  AtomGraph out = g;
  if (g.node_features.rank() == 2) {
    out.node_features = select_rows(g.node_features, inv);
  }
  if (g.positions) {
    out.positions = select_rows(*g.positions, inv);
  }
  if (g.node_targets) {
    out.node_targets = select_rows(*g.node_targets, inv);
  }
  if (!g.atomic_numbers.empty()) {
    for (std::size_t i = 0; i < g.node_count; ++i) {
      out.atomic_numbers[perm[i]] = g.atomic_numbers[i];
    }
  }
  for (Edge &e : out.edges) {
    const std::size_t a = perm[e.u];
    const std::size_t b = perm[e.v];
    e = {std::min(a, b), std::max(a, b)};
  }
  return out;
}

BatchedGraph batch(std::span<const AtomGraph> graphs) {
  std::vector<const AtomGraph *> ptrs;
  ptrs.reserve(graphs.size());
  for (const AtomGraph &g : graphs) {
    ptrs.push_back(&g);
  }
  return batch(ptrs);
}

BatchedGraph batch(std::span<const AtomGraph *const> graphs) {
  if (graphs.empty()) {
    throw std::invalid_argument("batch: no graphs");
  }
  const AtomGraph &first = *graphs.front();
  const std::size_t p = first.node_feature_dim();
  std::size_t f = first.edge_feature_dim();
  for (const AtomGraph *g : graphs) {
    if (!g->edges.empty()) {
      f = g->edge_feature_dim();
      break;
    }
  }
  const std::size_t t = first.graph_targets.size();
  const bool has_pos = first.positions.has_value();
  const bool has_node_targets = first.node_targets.has_value();
  const std::size_t nt = has_node_targets ? first.node_targets->cols() : 0;

  BatchedGraph b;
  b.node_offsets.push_back(0);
  b.edge_offsets.push_back(0);
  std::size_t total_nodes = 0, total_edges = 0;
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const AtomGraph &g = *graphs[k];
    const std::string who = "batch: graph " + std::to_string(k);
    require(g.node_feature_dim() == p, who + " has node feature width " +
                                           std::to_string(g.node_feature_dim()) + ", expected " +
                                           std::to_string(p));
    require(g.edges.empty() || g.edge_feature_dim() == f,
            who + " has edge feature width " + std::to_string(g.edge_feature_dim()) +
                ", expected " + std::to_string(f));
    require(g.graph_targets.size() == t, who + " has a different graph target arity");
    require(g.positions.has_value() == has_pos, who + " disagrees on positions");
    require(g.node_targets.has_value() == has_node_targets &&
                (!has_node_targets || g.node_targets->cols() == nt),
            who + " disagrees on node targets");
    total_nodes += g.node_count;
    total_edges += g.edges.size();
    b.node_offsets.push_back(total_nodes);
    b.edge_offsets.push_back(total_edges);
  }

  AtomGraph &m = b.merged;
  m.node_count = total_nodes;
  m.node_features = Tensor::matrix(total_nodes, p);
  m.edge_features = Tensor::matrix(total_edges, f);
  if (has_pos) {
    m.positions = Tensor::matrix(total_nodes, 3);
  }
  if (has_node_targets) {
    m.node_targets = Tensor::matrix(total_nodes, nt);
  }
  b.graph_targets = Tensor::matrix(graphs.size(), t);
  b.graph_index.reserve(total_nodes);
  bool any_z = false;
  for (const AtomGraph *g : graphs) {
    any_z = any_z || !g->atomic_numbers.empty();
  }

  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const AtomGraph &g = *graphs[k];
    const std::size_t no = b.node_offsets[k];
    const std::size_t eo = b.edge_offsets[k];
    for (std::size_t i = 0; i < g.node_count; ++i) {
      b.graph_index.push_back(k);
      for (std::size_t j = 0; j < p; ++j) {
        m.node_features(no + i, j) = g.node_features(i, j);
      }
      if (has_pos) {
        for (std::size_t j = 0; j < 3; ++j) {
          (*m.positions)(no + i, j) = (*g.positions)(i, j);
        }
      }
      if (has_node_targets) {
        for (std::size_t j = 0; j < nt; ++j) {
          (*m.node_targets)(no + i, j) = (*g.node_targets)(i, j);
        }
      }
    }
    if (any_z) {
      require(g.atomic_numbers.size() == g.node_count,
              "batch: graph " + std::to_string(k) + " lacks atomic numbers");
      m.atomic_numbers.insert(m.atomic_numbers.end(), g.atomic_numbers.begin(),
                              g.atomic_numbers.end());
    }
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      m.edges.push_back({g.edges[e].u + no, g.edges[e].v + no});
      for (std::size_t j = 0; j < f; ++j) {
        m.edge_features(eo + e, j) = g.edge_features(e, j);
      }
    }
    for (std::size_t j = 0; j < t; ++j) {
      b.graph_targets(k, j) = g.graph_targets[j];
    }
    b.cutoffs.push_back(g.cutoff);
  }
  return b;
}

std::vector<AtomGraph> unbatch(const BatchedGraph &b) {
  const AtomGraph &m = b.merged;
  const std::size_t p = m.node_feature_dim();
  const std::size_t f = m.edge_feature_dim();
  std::vector<AtomGraph> out;
  out.reserve(b.num_graphs());
  for (std::size_t k = 0; k < b.num_graphs(); ++k) {
    const std::size_t n0 = b.node_offsets[k], n1 = b.node_offsets[k + 1];
    const std::size_t e0 = b.edge_offsets[k], e1 = b.edge_offsets[k + 1];
    AtomGraph g;
    g.node_count = n1 - n0;
    g.node_features = Tensor::matrix(g.node_count, p);
    g.edge_features = Tensor::matrix(e1 - e0, f);
    for (std::size_t i = n0; i < n1; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        g.node_features(i - n0, j) = m.node_features(i, j);
      }
    }
    std::vector<std::size_t> rows(g.node_count);
    for (std::size_t i = 0; i < g.node_count; ++i) {
      rows[i] = n0 + i;
    }
    if (m.positions) {
      g.positions = select_rows(*m.positions, rows);
    }
    if (m.node_targets) {
      g.node_targets = select_rows(*m.node_targets, rows);
    }
    if (!m.atomic_numbers.empty()) {
      g.atomic_numbers.assign(m.atomic_numbers.begin() + static_cast<std::ptrdiff_t>(n0),
                              m.atomic_numbers.begin() + static_cast<std::ptrdiff_t>(n1));
    }
    for (std::size_t e = e0; e < e1; ++e) {
      g.edges.push_back({m.edges[e].u - n0, m.edges[e].v - n0});
      for (std::size_t j = 0; j < f; ++j) {
        g.edge_features(e - e0, j) = m.edge_features(e, j);
      }
    }
    auto trow = b.graph_targets.row(k);
    g.graph_targets.assign(trow.begin(), trow.end());
    g.cutoff = b.cutoffs[k];
    out.push_back(std::move(g));
  }
  return out;
}

} // namespace lrgnn
