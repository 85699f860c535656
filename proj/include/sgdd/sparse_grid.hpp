#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgdd/error.hpp"

namespace sgdd {

/// Multi-index selection rule r(h) <= h*.
enum class IndexRule { prod, sum, max };

inline std::string to_string(IndexRule rule) {
  switch (rule) {
    case IndexRule::prod: return "prod";
    case IndexRule::sum: return "sum";
    case IndexRule::max: return "max";
  }
  return "?";
}

inline IndexRule parse_index_rule(const std::string& s) {
  if (s == "prod") return IndexRule::prod;
  if (s == "sum") return IndexRule::sum;
  if (s == "max") return IndexRule::max;
  fail(ErrorKind::invalid_argument, "unknown multi-index rule '" + s + "' (expected prod, sum or max)");
}

using MultiIndex = std::vector<int>;

struct GridSpec {
  int dim = 2;
  IndexRule rule = IndexRule::sum;
  int level = 6;

  /// Largest per-axis refinement level reachable under the rule.
  int max_axis_level() const {
    switch (rule) {
      case IndexRule::sum: return level - (dim - 1);
      case IndexRule::prod:
      case IndexRule::max: return level;
    }
    return level;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// A number num / 2^exponent.
struct Dyadic {
  std::int64_t num = 0;
  int exponent = 0;

  double value() const { return std::ldexp(static_cast<double>(num), -exponent); }
  friend bool operator==(const Dyadic& a, const Dyadic& b) {
    // compare on a common denominator
    int e = std::max(a.exponent, b.exponent);
    return (a.num << (e - a.exponent)) == (b.num << (e - b.exponent));
  }
};

/// m(h): 1 knot on level 1, 2^(h-1)+1 afterwards.
inline std::int64_t level_to_knots(int h) {
  if (h < 1) fail(ErrorKind::invalid_argument, "refinement level must be >= 1, got " + std::to_string(h));
  if (h == 1) return 1;
  return (std::int64_t{1} << (h - 1)) + 1;
}

/// Equispaced nested knots on [0,1] for level h.
inline std::vector<Dyadic> univariate_knots(int h) {
  const auto m = level_to_knots(h);
  if (m == 1) return {Dyadic{1, 1}};
  std::vector<Dyadic> knots;
  knots.reserve(static_cast<std::size_t>(m));
  for (std::int64_t k = 0; k < m; ++k) knots.push_back(Dyadic{k, h - 1});
  return knots;
}

namespace detail {

inline void enumerate_indices(IndexRule rule, int level, int dim, MultiIndex& current,
                              std::vector<MultiIndex>& out) {
  const int placed = static_cast<int>(current.size());
  if (placed == dim) {
    out.push_back(current);
    return;
  }
  const int remaining = dim - placed - 1;
  for (int h = 1; h <= level; ++h) {
    bool ok = true;
    switch (rule) {
      case IndexRule::sum: {
        long s = h + remaining;
        for (int v : current) s += v;
        ok = s <= level;
        break;
      }
      case IndexRule::prod: {
        long p = h;
        for (int v : current) p *= v;
        ok = p <= level;
        break;
      }
      case IndexRule::max: ok = h <= level; break;
    }
    if (!ok) break;  // every rule is monotone in h
    current.push_back(h);
    enumerate_indices(rule, level, dim, current, out);
    current.pop_back();
  }
}

}  // namespace detail

/// I(h*) = { h in N_+^n : r(h) <= h* }, lexicographically ordered.
inline std::vector<MultiIndex> multi_index_set(IndexRule rule, int level, int dim) {
  if (dim < 1) fail(ErrorKind::invalid_argument, "dimension must be >= 1");
  if (level < 1) fail(ErrorKind::empty_grid, "level h* must be >= 1");
  std::vector<MultiIndex> out;
  MultiIndex current;
  current.reserve(static_cast<std::size_t>(dim));
  detail::enumerate_indices(rule, level, dim, current, out);
  if (out.empty())
    fail(ErrorKind::empty_grid, "multi-index set I_" + to_string(rule) + "(" + std::to_string(level) +
                                    ") is empty in dimension " + std::to_string(dim));
  return out;
}

/// Hypercubic box: center and common edge length.
struct Box {
  std::vector<double> center;
  double edge = 1.0;

  Box() = default;
  Box(std::vector<double> c, double e) : center(std::move(c)), edge(e) {
    if (!(edge > 0) || !std::isfinite(edge))
      fail(ErrorKind::invalid_argument, "box edge length must be positive and finite");
    if (center.empty()) fail(ErrorKind::invalid_argument, "box needs at least one dimension");
  }

  /// [lo, hi]^n
  static Box from_bounds(double lo, double hi, int dim) {
    return Box(std::vector<double>(static_cast<std::size_t>(dim), 0.5 * (lo + hi)), hi - lo);
  }

  int dim() const { return static_cast<int>(center.size()); }
  double lower(int axis) const { return center[static_cast<std::size_t>(axis)] - 0.5 * edge; }
  double upper(int axis) const { return center[static_cast<std::size_t>(axis)] + 0.5 * edge; }

  bool contains(std::span<const double> x) const {
    for (int a = 0; a < dim(); ++a)
      if (x[static_cast<std::size_t>(a)] < lower(a) || x[static_cast<std::size_t>(a)] > upper(a)) return false;
    return true;
  }
};

/// Equispaced sparse grid stored on an exact dyadic lattice.
///
/// Point i has lattice numerators k_i in {0..M}^n and real coordinates
/// x_i = c + (k_i / M - 1/2) * edge. Points are sorted lexicographically on
/// the lattice so that detector slots are stable across similar grids.
class SparseGrid {
 public:
  using Coord = std::int32_t;

  static SparseGrid build(const GridSpec& spec, const Box& box) {
    if (box.dim() != spec.dim)
      fail(ErrorKind::dimension_mismatch, "box dimension " + std::to_string(box.dim()) +
                                              " does not match grid dimension " + std::to_string(spec.dim));
    const auto indices = multi_index_set(spec.rule, spec.level, spec.dim);
    SparseGrid g;
    g.spec_ = spec;
    g.box_ = box;
    g.max_level_ = 1;
    for (const auto& h : indices)
      for (int v : h) g.max_level_ = std::max(g.max_level_, v);
    g.log2_resolution_ = std::max(g.max_level_ - 1, 1);
    const Coord m = Coord{1} << g.log2_resolution_;

    const auto n = static_cast<std::size_t>(spec.dim);
    std::vector<Coord> flat;
    std::vector<std::vector<Coord>> axis_knots(n);
    for (const auto& h : indices) {
      for (std::size_t a = 0; a < n; ++a) {
        axis_knots[a].clear();
        if (h[a] == 1) {
          axis_knots[a].push_back(m / 2);
        } else {
          const Coord step = m >> (h[a] - 1);
          for (Coord k = 0; k <= m; k += step) axis_knots[a].push_back(k);
        }
      }
      // tensor product, odometer order
      std::vector<std::size_t> pos(n, 0);
      for (bool more = true; more;) {
        for (std::size_t a = 0; a < n; ++a) flat.push_back(axis_knots[a][pos[a]]);
        more = false;
        for (std::size_t a = n; a-- > 0;) {
          if (++pos[a] < axis_knots[a].size()) {
            more = true;
            break;
          }
          pos[a] = 0;
        }
      }
    }
    // sort + dedupe rows
    const std::size_t rows = flat.size() / n;
    std::vector<std::size_t> order(rows);
    for (std::size_t i = 0; i < rows; ++i) order[i] = i;
    auto row_less = [&](std::size_t a, std::size_t b) {
      return std::lexicographical_compare(flat.begin() + static_cast<long>(a * n), flat.begin() + static_cast<long>((a + 1) * n),
                                          flat.begin() + static_cast<long>(b * n), flat.begin() + static_cast<long>((b + 1) * n));
    };
    auto row_eq = [&](std::size_t a, std::size_t b) {
      return std::equal(flat.begin() + static_cast<long>(a * n), flat.begin() + static_cast<long>((a + 1) * n),
                        flat.begin() + static_cast<long>(b * n));
    };
    std::sort(order.begin(), order.end(), row_less);
    order.erase(std::unique(order.begin(), order.end(), row_eq), order.end());
    g.lattice_.reserve(order.size() * n);
    for (std::size_t r : order)
      g.lattice_.insert(g.lattice_.end(), flat.begin() + static_cast<long>(r * n), flat.begin() + static_cast<long>((r + 1) * n));
    return g;
  }

  /// Same lattice, new box: x' = a x + b with a = edge / edge_ref.
  SparseGrid similar(std::span<const double> center, double edge) const {
    if (static_cast<int>(center.size()) != dim())
      fail(ErrorKind::dimension_mismatch, "center dimension does not match grid dimension");
    SparseGrid g = *this;
    g.box_ = Box(std::vector<double>(center.begin(), center.end()), edge);
    return g;
  }

  const GridSpec& spec() const { return spec_; }
  const Box& box() const { return box_; }
  int dim() const { return spec_.dim; }
  std::size_t size() const { return lattice_.size() / static_cast<std::size_t>(spec_.dim); }
  /// h_max: largest refinement level actually used on any axis.
  int max_level() const { return max_level_; }
  int log2_resolution() const { return log2_resolution_; }
  Coord resolution() const { return Coord{1} << log2_resolution_; }

  std::span<const Coord> lattice(std::size_t i) const {
    const auto n = static_cast<std::size_t>(spec_.dim);
    return {lattice_.data() + i * n, n};
  }

  double coordinate(std::size_t i, int axis) const {
    // centred form: the two faces come out exactly as lower() and upper()
    const double frac = std::ldexp(static_cast<double>(lattice(i)[static_cast<std::size_t>(axis)]), -log2_resolution_);
    return box_.center[static_cast<std::size_t>(axis)] + (frac - 0.5) * box_.edge;
  }

  std::vector<double> point(std::size_t i) const {
    std::vector<double> x(static_cast<std::size_t>(dim()));
    for (int a = 0; a < dim(); ++a) x[static_cast<std::size_t>(a)] = coordinate(i, a);
    return x;
  }

  /// Row-major N x n matrix of real coordinates.
  std::vector<double> coordinates() const {
    std::vector<double> out;
    out.reserve(lattice_.size());
    for (std::size_t i = 0; i < size(); ++i)
      for (int a = 0; a < dim(); ++a) out.push_back(coordinate(i, a));
    return out;
  }

  /// Index of the point with the given lattice numerators, if present.
  std::optional<std::size_t> find(std::span<const Coord> k) const {
    const auto n = static_cast<std::size_t>(spec_.dim);
    std::size_t lo = 0, hi = size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      auto row = lattice(mid);
      if (std::lexicographical_compare(row.begin(), row.end(), k.begin(), k.begin() + static_cast<long>(n)))
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo < size() && std::equal(k.begin(), k.begin() + static_cast<long>(n), lattice(lo).begin())) return lo;
    return std::nullopt;
  }

  /// True when at least one refinement beyond level 1 exists on every axis.
  bool refines_every_axis() const { return max_level_ >= 2; }

 private:
  SparseGrid() = default;

  GridSpec spec_;
  Box box_;
  int max_level_ = 1;
  int log2_resolution_ = 1;
  std::vector<Coord> lattice_;
};

}  // namespace sgdd
