#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "sgdd/detectors.hpp"

using namespace sgdd;

namespace {

SparseGrid grid2d() { return SparseGrid::build({2, IndexRule::sum, 6}, Box::from_bounds(-1, 1, 2)); }

std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

}  // namespace

TEST(ZLevelDetector, HandPlacedVerticalLine) {
  auto g = grid2d();
  auto graph = GridGraph::build(g);
  auto cut = std::make_shared<LinearCut>(std::vector<double>{1.0, 0.0}, -0.03);  // x1 = 0.03
  // Expected by hand: every edge crossing x1 = 0.03 starts at x1 = 0, which is
  // always the nearer end.
  std::vector<double> expect(g.size(), 0.0);
  for (const auto& e : graph.edges()) {
    const double a = g.coordinate(e.i, 0), b = g.coordinate(e.j, 0);
    if (a == 0.0 && b > 0.0) expect[e.i] = 1.0;
    if (b == 0.0 && a > 0.0) expect[e.j] = 1.0;
  }
  std::size_t count = 0;
  for (double v : expect) count += v == 1.0;
  EXPECT_GT(count, 0u);
  for (int t : {2, 10, 149}) EXPECT_EQ(ZLevelDetector(cut, t).detect(g, graph, zeros(g.size())), expect) << t;
  EXPECT_EQ(ExactOracle(cut).detect(g, graph, zeros(g.size())), expect);
}

TEST(ZLevelDetector, MidpointTieMarksBothEnds) {
  auto g = SparseGrid::build({1, IndexRule::sum, 2}, Box::from_bounds(-1, 1, 1));  // -1, 0, 1
  auto graph = GridGraph::build(g);
  auto cut = std::make_shared<LinearCut>(std::vector<double>{1.0}, -0.5);
  const std::vector<double> expect{0.0, 1.0, 1.0};
  for (int t : {2, 3, 4, 149, 150}) EXPECT_EQ(ZLevelDetector(cut, t).detect(g, graph, zeros(3)), expect) << t;
  EXPECT_EQ(ExactOracle(cut).detect(g, graph, zeros(3)), expect);
}

TEST(ZLevelDetector, ZeroAtGridPointIsTroubled) {
  auto g = SparseGrid::build({1, IndexRule::sum, 2}, Box::from_bounds(-1, 1, 1));
  auto graph = GridGraph::build(g);
  auto cut = std::make_shared<LinearCut>(std::vector<double>{1.0}, 0.0);  // vanishes at x = 0
  const std::vector<double> expect{0.0, 1.0, 0.0};
  EXPECT_EQ(ZLevelDetector(cut, 4).detect(g, graph, zeros(3)), expect);
  EXPECT_EQ(ExactOracle(cut).detect(g, graph, zeros(3)), expect);
}

TEST(ZLevelDetector, RejectsTooFewSamples) {
  auto cut = std::make_shared<LinearCut>(std::vector<double>{1.0}, 0.0);
  EXPECT_THROW(ZLevelDetector(cut, 1), Error);
  EXPECT_THROW(ZLevelDetector(nullptr, 4), Error);
}

TEST(ZLevelDetector, EvenRefinementIsMonotoneAndBoundedByOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1), e(0.05, 2);
  auto ref = grid2d();
  auto graph = GridGraph::build(ref);
  for (int trial = 0; trial < 60; ++trial) {
    auto cut = sample_cut(trial % 2 ? CutKind::spherical : CutKind::linear, 2, rng, CutSamplingOptions{{}, false, 0});
    const std::vector<double> c{u(rng), u(rng)};
    auto g = ref.similar(c, e(rng));
    auto oracle = ExactOracle(cut).detect(g, graph, zeros(g.size()));
    for (int t : {2, 8, 50}) {
      auto coarse = ZLevelDetector(cut, t).detect(g, graph, zeros(g.size()));
      auto fine = ZLevelDetector(cut, 2 * t).detect(g, graph, zeros(g.size()));
      for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_LE(coarse[i], fine[i]);
        EXPECT_LE(fine[i], oracle[i]);
        if (cut->kind() == "linear") EXPECT_EQ(coarse[i], oracle[i]);
      }
    }
  }
}

TEST(ZLevelDetector, BatchEqualsSingle) {
  std::mt19937_64 rng(5);
  auto ref = grid2d();
  auto graph = GridGraph::build(ref);
  auto cut = sample_cut(CutKind::polynomial, 2, rng);
  ZLevelDetector z(cut, 20);
  const std::vector<double> c1{0.5, 0.5}, c2{-0.25, 0.75};
  std::vector<SparseGrid> instances{ref, ref.similar(c1, 1.0), ref.similar(c2, 0.5)};
  const std::size_t n = ref.size();
  std::vector<double> values(3 * n, 0.0), out(3 * n, -1.0);
  z.detect_batch(instances, graph, values, out);
  for (std::size_t k = 0; k < 3; ++k) {
    auto single = z.detect(instances[k], graph, zeros(n));
    EXPECT_TRUE(std::equal(single.begin(), single.end(), out.begin() + static_cast<long>(k * n)));
  }
}

TEST(Detector, InputSizeChecked) {
  auto g = grid2d();
  auto graph = GridGraph::build(g);
  auto cut = std::make_shared<LinearCut>(std::vector<double>{1.0, 0.0}, 0.0);
  try {
    ZLevelDetector(cut, 4).detect(g, graph, zeros(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension_mismatch);
  }
}

TEST(ExactOracle, UnsupportedCut) {
  auto g = SparseGrid::build({4, IndexRule::sum, 6}, Box::from_bounds(-1, 1, 4));
  auto graph = GridGraph::build(g);
  try {
    ExactOracle(std::make_shared<TorusCut>()).detect(g, graph, zeros(g.size()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported_cut);
  }
}
