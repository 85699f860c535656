#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <span>
#include <tuple>
#include <optional>
#include <vector>

#include "sgdd/error.hpp"
#include "sgdd/sparse_grid.hpp"

namespace sgdd {

struct GridEdge {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  int axis = 0;
  int dyadic_length = 0;               // segment length = edge / 2^d
  SparseGrid::Coord lattice_length = 0;  // |k_j - k_i| along axis
  double weight = 0.0;

  double length(double box_edge, SparseGrid::Coord resolution) const {
    return box_edge * static_cast<double>(lattice_length) / static_cast<double>(resolution);
  }
  friend bool operator==(const GridEdge&, const GridEdge&) = default;
};

/// Symmetric sparse matrix in CSR form, columns sorted per row.
struct SparseMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> cols;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const {
    auto first = cols.begin() + static_cast<long>(row_ptr[r]);
    auto last = cols.begin() + static_cast<long>(row_ptr[r + 1]);
    auto it = std::lower_bound(first, last, c);
    if (it == last || *it != c) return 0.0;
    return values[static_cast<std::size_t>(it - cols.begin())];
  }

  std::vector<double> dense() const {
    std::vector<double> out(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) out[r * n + cols[p]] = values[p];
    return out;
  }

  std::size_t nonzeros() const { return cols.size(); }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;
};

namespace detail {

inline bool same_except(std::span<const SparseGrid::Coord> a, std::span<const SparseGrid::Coord> b, int skip1,
                        int skip2 = -1) {
  for (std::size_t c = 0; c < a.size(); ++c) {
    if (static_cast<int>(c) == skip1 || static_cast<int>(c) == skip2) continue;
    if (a[c] != b[c]) return false;
  }
  return true;
}

}  // namespace detail

/// Consecutive lattice points along each axis (rules (i) and (ii)).
inline std::vector<GridEdge> build_raw_edges(const SparseGrid& grid) {
  std::vector<GridEdge> edges;
  const std::size_t n_pts = grid.size();
  const int n = grid.dim();
  std::vector<std::size_t> order(n_pts);
  for (int axis = 0; axis < n; ++axis) {
    for (std::size_t i = 0; i < n_pts; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      auto ka = grid.lattice(a), kb = grid.lattice(b);
      for (int c = 0; c < n; ++c) {
        if (c == axis) continue;
        if (ka[static_cast<std::size_t>(c)] != kb[static_cast<std::size_t>(c)])
          return ka[static_cast<std::size_t>(c)] < kb[static_cast<std::size_t>(c)];
      }
      return ka[static_cast<std::size_t>(axis)] < kb[static_cast<std::size_t>(axis)];
    });
    for (std::size_t r = 1; r < n_pts; ++r) {
      const std::size_t p = order[r - 1], q = order[r];
      if (!detail::same_except(grid.lattice(p), grid.lattice(q), axis)) continue;
      GridEdge e;
      e.i = std::min(p, q);
      e.j = std::max(p, q);
      e.axis = axis;
      e.lattice_length = grid.lattice(q)[static_cast<std::size_t>(axis)] - grid.lattice(p)[static_cast<std::size_t>(axis)];
      const auto len = static_cast<std::uint32_t>(e.lattice_length);
      // gaps on a line of a nested equispaced grid are powers of two
      if (!std::has_single_bit(len))
        fail(ErrorKind::degenerate_graph, "non-dyadic gap on sparse grid line");
      e.dyadic_length = grid.log2_resolution() - std::countr_zero(len);
      edges.push_back(e);
    }
  }
  std::sort(edges.begin(), edges.end(), [](const GridEdge& a, const GridEdge& b) {
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  return edges;
}

/// Rule (iii): drop every edge crossed, at a point interior to both
/// segments, by a perpendicular edge of equal or shorter length.
inline std::vector<GridEdge> prune_edges(const std::vector<GridEdge>& raw, const SparseGrid& grid) {
  const int n = grid.dim();
  std::vector<bool> removed(raw.size(), false);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      // group both edge families by the coordinates outside {a, b}
      std::map<std::vector<SparseGrid::Coord>, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
      for (std::size_t e = 0; e < raw.size(); ++e) {
        if (raw[e].axis != a && raw[e].axis != b) continue;
        auto k = grid.lattice(raw[e].i);
        std::vector<SparseGrid::Coord> key;
        key.reserve(static_cast<std::size_t>(n));
        for (int c = 0; c < n; ++c)
          if (c != a && c != b) key.push_back(k[static_cast<std::size_t>(c)]);
        auto& slot = groups[key];
        (raw[e].axis == a ? slot.first : slot.second).push_back(e);
      }
      for (auto& [key, fam] : groups) {
        for (std::size_t ea : fam.first) {
          auto pa = grid.lattice(raw[ea].i);
          const auto a_lo = pa[static_cast<std::size_t>(a)];
          const auto a_hi = a_lo + raw[ea].lattice_length;
          const auto a_at = pa[static_cast<std::size_t>(b)];
          for (std::size_t eb : fam.second) {
            auto pb = grid.lattice(raw[eb].i);
            const auto b_lo = pb[static_cast<std::size_t>(b)];
            const auto b_hi = b_lo + raw[eb].lattice_length;
            const auto b_at = pb[static_cast<std::size_t>(a)];
            const bool crossing = a_lo < b_at && b_at < a_hi && b_lo < a_at && a_at < b_hi;
            if (!crossing) continue;
            if (raw[eb].lattice_length <= raw[ea].lattice_length) removed[ea] = true;
            if (raw[ea].lattice_length <= raw[eb].lattice_length) removed[eb] = true;
          }
        }
      }
    }
  }
  std::vector<GridEdge> kept;
  for (std::size_t e = 0; e < raw.size(); ++e)
    if (!removed[e]) kept.push_back(raw[e]);
  return kept;
}

/// omega_ij = l / |x_i - x_j| with l the shortest edge; exact on the lattice.
inline void assign_edge_weights(std::vector<GridEdge>& edges) {
  if (edges.empty()) fail(ErrorKind::degenerate_graph, "cannot weight an empty edge list");
  SparseGrid::Coord shortest = std::numeric_limits<SparseGrid::Coord>::max();
  for (const auto& e : edges) shortest = std::min(shortest, e.lattice_length);
  for (auto& e : edges) e.weight = static_cast<double>(shortest) / static_cast<double>(e.lattice_length);
}

inline SparseMatrix adjacency_matrix(const std::vector<GridEdge>& edges, std::size_t n_nodes) {
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n_nodes);
  for (const auto& e : edges) {
    rows[e.i].emplace_back(e.j, e.weight);
    rows[e.j].emplace_back(e.i, e.weight);
  }
  SparseMatrix m;
  m.n = n_nodes;
  m.row_ptr.reserve(n_nodes + 1);
  m.row_ptr.push_back(0);
  for (auto& row : rows) {
    std::sort(row.begin(), row.end());
    for (auto [c, v] : row) {
      m.cols.push_back(c);
      m.values.push_back(v);
    }
    m.row_ptr.push_back(m.cols.size());
  }
  return m;
}

/// Weighted sparse grid graph of a reference grid.
///
/// Depends only on the lattice, so every grid similar to the reference
/// shares the same edges and adjacency.
class GridGraph {
 public:
  static GridGraph build(const SparseGrid& grid) {
    GridGraph g;
    g.n_nodes_ = grid.size();
    g.resolution_ = grid.resolution();
    g.h_max_ = grid.max_level();
    g.edges_ = prune_edges(build_raw_edges(grid), grid);
    if (!g.edges_.empty()) assign_edge_weights(g.edges_);
    g.adjacency_ = adjacency_matrix(g.edges_, g.n_nodes_);
    g.incident_max_.assign(g.n_nodes_, 0);
    for (const auto& e : g.edges_) {
      g.incident_max_[e.i] = std::max(g.incident_max_[e.i], e.lattice_length);
      g.incident_max_[e.j] = std::max(g.incident_max_[e.j], e.lattice_length);
    }
    return g;
  }

  std::size_t size() const { return n_nodes_; }
  const std::vector<GridEdge>& edges() const { return edges_; }
  const SparseMatrix& adjacency() const { return adjacency_; }
  SparseGrid::Coord resolution() const { return resolution_; }
  int max_level() const { return h_max_; }

  std::span<const std::size_t> neighbors(std::size_t node) const {
    return {adjacency_.cols.data() + adjacency_.row_ptr[node], adjacency_.row_ptr[node + 1] - adjacency_.row_ptr[node]};
  }

  /// Longest incident edge in lattice units (0 for an isolated node).
  SparseGrid::Coord incident_max_lattice_length(std::size_t node) const { return incident_max_[node]; }

  /// Longest incident edge as a real length for a box of the given edge.
  double incident_max_edge_length(std::size_t node, double box_edge) const {
    if (incident_max_[node] == 0)
      fail(ErrorKind::degenerate_graph, "node " + std::to_string(node) + " has no incident edge");
    return box_edge * static_cast<double>(incident_max_[node]) / static_cast<double>(resolution_);
  }

  /// Longest edge of the whole graph in lattice units.
  SparseGrid::Coord global_max_lattice_length() const {
    SparseGrid::Coord m = 0;
    for (auto v : incident_max_) m = std::max(m, v);
    return m;
  }

  /// Unweighted shortest-path lengths from one node; -1 marks unreachable.
  std::vector<int> hop_distances(std::size_t source) const {
    std::vector<int> dist(n_nodes_, -1);
    std::deque<std::size_t> queue{source};
    dist[source] = 0;
    while (!queue.empty()) {
      const auto u = queue.front();
      queue.pop_front();
      for (auto v : neighbors(u))
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
    }
    return dist;
  }

 private:
  std::size_t n_nodes_ = 0;
  SparseGrid::Coord resolution_ = 2;
  int h_max_ = 1;
  std::vector<GridEdge> edges_;
  SparseMatrix adjacency_;
  std::vector<SparseGrid::Coord> incident_max_;
};

/// Max over node pairs of the hop distance (BFS from every node).
inline int graph_diameter(const GridGraph& graph) {
  int diameter = 0;
  for (std::size_t s = 0; s < graph.size(); ++s) {
    for (int d : graph.hop_distances(s)) {
      if (d < 0) fail(ErrorKind::disconnected_graph, "sparse grid graph is disconnected (infinite diameter)");
      diameter = std::max(diameter, d);
    }
  }
  return diameter;
}

}  // namespace sgdd
