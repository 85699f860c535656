#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "sgdd/grid_graph.hpp"
#include "sgdd/sparse_grid.hpp"

using namespace sgdd;

namespace {

using EdgeSet = std::set<std::pair<std::size_t, std::size_t>>;

// Quadratic-time construction straight from the geometric rules, on real
// coordinates of the unit box.
EdgeSet brute_force_edges(const SparseGrid& g) {
  const std::size_t n = g.size();
  const int d = g.dim();
  struct Seg {
    std::size_t i, j;
    int axis;
    double len;
  };
  std::vector<Seg> raw;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      auto xi = g.point(i), xj = g.point(j);
      int diff = -1, count = 0;
      for (int a = 0; a < d; ++a)
        if (xi[a] != xj[a]) {
          diff = a;
          ++count;
        }
      if (count != 1) continue;
      const double lo = std::min(xi[diff], xj[diff]), hi = std::max(xi[diff], xj[diff]);
      bool blocked = false;
      for (std::size_t k = 0; k < n && !blocked; ++k) {
        if (k == i || k == j) continue;
        auto xk = g.point(k);
        bool on_line = true;
        for (int a = 0; a < d; ++a)
          if (a != diff && xk[a] != xi[a]) on_line = false;
        if (on_line && xk[diff] > lo && xk[diff] < hi) blocked = true;
      }
      if (!blocked) raw.push_back({i, j, diff, hi - lo});
    }
  std::vector<bool> removed(raw.size(), false);
  for (std::size_t p = 0; p < raw.size(); ++p)
    for (std::size_t q = 0; q < raw.size(); ++q) {
      if (raw[p].axis == raw[q].axis) continue;
      auto a0 = g.point(raw[p].i), a1 = g.point(raw[p].j);
      auto b0 = g.point(raw[q].i), b1 = g.point(raw[q].j);
      const int ax = raw[p].axis, bx = raw[q].axis;
      bool same_rest = true;
      for (int c = 0; c < d; ++c)
        if (c != ax && c != bx && a0[c] != b0[c]) same_rest = false;
      if (!same_rest) continue;
      // crossing point (b0[ax], a0[bx]) strictly inside both
      const double cx = b0[ax], cy = a0[bx];
      const bool inside_a = cx > std::min(a0[ax], a1[ax]) && cx < std::max(a0[ax], a1[ax]);
      const bool inside_b = cy > std::min(b0[bx], b1[bx]) && cy < std::max(b0[bx], b1[bx]);
      if (inside_a && inside_b && raw[q].len <= raw[p].len) removed[p] = true;
    }
  EdgeSet out;
  for (std::size_t p = 0; p < raw.size(); ++p)
    if (!removed[p]) out.insert({raw[p].i, raw[p].j});
  return out;
}

EdgeSet edge_set(const GridGraph& g) {
  EdgeSet s;
  for (const auto& e : g.edges()) s.insert({e.i, e.j});
  return s;
}

int floyd_warshall_diameter(const GridGraph& g) {
  const std::size_t n = g.size();
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<int> d(n * n, inf);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0;
  for (const auto& e : g.edges()) d[e.i * n + e.j] = d[e.j * n + e.i] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      const int dik = d[i * n + k];
      if (dik >= inf) continue;
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] = std::min(d[i * n + j], dik + d[k * n + j]);
    }
  int diam = 0;
  for (int v : d) diam = std::max(diam, v);
  return diam;
}

SparseGrid grid2d() { return SparseGrid::build({2, IndexRule::sum, 6}, Box::from_bounds(-1, 1, 2)); }
SparseGrid grid4d() { return SparseGrid::build({4, IndexRule::sum, 8}, Box::from_bounds(-1, 1, 4)); }

}  // namespace

TEST(GridGraph, MatchesGeometricBruteForce) {
  for (const auto& g : {grid2d(), SparseGrid::build({3, IndexRule::sum, 6}, Box::from_bounds(0, 1, 3)),
                        SparseGrid::build({2, IndexRule::prod, 8}, Box::from_bounds(0, 1, 2)),
                        SparseGrid::build({2, IndexRule::max, 3}, Box::from_bounds(0, 1, 2))}) {
    auto graph = GridGraph::build(g);
    EXPECT_EQ(edge_set(graph), brute_force_edges(g)) << g.size() << " points";
  }
}

TEST(GridGraph, FourDimensionalMatchesBruteForce) {
  auto g = grid4d();
  EXPECT_EQ(edge_set(GridGraph::build(g)), brute_force_edges(g));
}

TEST(GridGraph, ReferenceEdgeCounts) {
  auto g2 = grid2d();
  EXPECT_EQ(build_raw_edges(g2).size(), 96u);
  EXPECT_EQ(GridGraph::build(g2).edges().size(), 80u);
  auto g4 = grid4d();
  EXPECT_EQ(build_raw_edges(g4).size(), 896u);
  EXPECT_EQ(GridGraph::build(g4).edges().size(), 608u);
}

TEST(GridGraph, DiameterAgreesWithFloydWarshall) {
  auto graph2 = GridGraph::build(grid2d());
  EXPECT_EQ(graph_diameter(graph2), floyd_warshall_diameter(graph2));
  EXPECT_EQ(graph_diameter(graph2), 10);
  auto graph4 = GridGraph::build(grid4d());
  EXPECT_EQ(graph_diameter(graph4), floyd_warshall_diameter(graph4));
  EXPECT_EQ(graph_diameter(graph4), 12);
}

TEST(GridGraph, TrivialDiameters) {
  auto path = GridGraph::build(SparseGrid::build({1, IndexRule::sum, 2}, Box::from_bounds(0, 1, 1)));
  EXPECT_EQ(path.size(), 3u);
  EXPECT_EQ(graph_diameter(path), 2);
  auto single = GridGraph::build(SparseGrid::build({2, IndexRule::max, 1}, Box::from_bounds(0, 1, 2)));
  EXPECT_EQ(graph_diameter(single), 0);
}

TEST(GridGraph, WeightsInUnitIntervalAndHypercubicFormula) {
  for (const auto& g : {grid2d(), grid4d()}) {
    auto graph = GridGraph::build(g);
    bool has_one = false;
    for (const auto& e : graph.edges()) {
      EXPECT_GT(e.weight, 0.0);
      EXPECT_LE(e.weight, 1.0);
      has_one |= e.weight == 1.0;
      EXPECT_EQ(e.weight, std::ldexp(1.0, e.dyadic_length - (g.max_level() - 1)));
      // real length is edge / 2^d
      EXPECT_DOUBLE_EQ(e.length(g.box().edge, g.resolution()), g.box().edge * std::ldexp(1.0, -e.dyadic_length));
    }
    EXPECT_TRUE(has_one);
  }
}

TEST(GridGraph, AdjacencySymmetricZeroDiagonal) {
  auto graph = GridGraph::build(grid2d());
  const auto dense = graph.adjacency().dense();
  const std::size_t n = graph.size();
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(dense[i * n + i], 0.0);
    for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(dense[i * n + j], dense[j * n + i]);
  }
  EXPECT_EQ(graph.adjacency().nonzeros(), 2 * graph.edges().size());
}

TEST(GridGraph, SimilarGridsShareAdjacency) {
  auto ref = grid2d();
  const auto base = GridGraph::build(ref).adjacency();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10, 10), e(1e-3, 10);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> c{u(rng), u(rng)};
    EXPECT_EQ(GridGraph::build(ref.similar(c, e(rng))).adjacency(), base);
  }
}

TEST(GridGraph, IncidentMaxEdgeLength) {
  auto g = grid2d();
  auto graph = GridGraph::build(g);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    double m = 0;
    for (const auto& e : graph.edges())
      if (e.i == i || e.j == i) m = std::max(m, e.length(2.0, g.resolution()));
    EXPECT_EQ(graph.incident_max_edge_length(i, 2.0), m);
    EXPECT_LE(m, 1.0);  // at most half the box edge
  }
  // corner (-1,-1): neighbours on both boundary lines sit at lattice offset 2 of 16
  std::vector<SparseGrid::Coord> corner{0, 0};
  auto idx = g.find(corner);
  ASSERT_TRUE(idx.has_value());
  EXPECT_DOUBLE_EQ(graph.incident_max_edge_length(*idx, 2.0), 0.25);
}

TEST(GridGraph, IsolatedNodeHasNoIncidentLength) {
  auto graph = GridGraph::build(SparseGrid::build({2, IndexRule::max, 1}, Box::from_bounds(0, 1, 2)));
  EXPECT_THROW(graph.incident_max_edge_length(0, 1.0), Error);
}
