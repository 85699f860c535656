#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sgdd/cuts.hpp"
#include "sgdd/error.hpp"
#include "sgdd/grid_graph.hpp"
#include "sgdd/sparse_grid.hpp"

namespace sgdd {

/// Marker for evaluations outside the domain.
inline constexpr double out_of_domain = std::numeric_limits<double>::infinity();
inline bool is_sentinel(double v) { return std::isinf(v); }

/// Maps the evaluations of g on one grid instance to per-point troubled
/// likelihoods in [0,1].
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string name() const = 0;
  virtual bool deterministic() const { return true; }

  virtual std::vector<double> detect(const SparseGrid& instance, const GridGraph& graph,
                                     std::span<const double> values) const = 0;

  /// K instances at once; values and out are K x N row-major.
  virtual void detect_batch(std::span<const SparseGrid> instances, const GridGraph& graph, std::span<const double> values,
                            std::span<double> out) const {
    const std::size_t n = graph.size();
    for (std::size_t k = 0; k < instances.size(); ++k) {
      auto p = detect(instances[k], graph, values.subspan(k * n, n));
      std::copy(p.begin(), p.end(), out.begin() + static_cast<long>(k * n));
    }
  }
};

using DetectorPtr = std::shared_ptr<const Detector>;

namespace detail {

inline int sign(double v) { return (v > 0.0) - (v < 0.0); }

inline void check_detector_input(const SparseGrid& instance, const GridGraph& graph, std::span<const double> values) {
  if (instance.size() != graph.size() || values.size() != graph.size())
    fail(ErrorKind::dimension_mismatch, "detector input has " + std::to_string(values.size()) + " values for a grid of " +
                                            std::to_string(graph.size()) + " points");
}

}  // namespace detail

/// Z^(t+1): t+1 equispaced sign samples of the cut along every edge.
class ZLevelDetector final : public Detector {
 public:
  ZLevelDetector(CutPtr cut, int t) : cut_(std::move(cut)), t_(t) {
    if (t_ < 2) fail(ErrorKind::invalid_argument, "zero-level detector needs t >= 2, got " + std::to_string(t_));
    if (!cut_) fail(ErrorKind::invalid_argument, "zero-level detector needs a cut");
  }

  std::string name() const override { return "zlevel:" + std::to_string(t_); }
  int samples() const { return t_; }

  std::vector<double> detect(const SparseGrid& instance, const GridGraph& graph,
                             std::span<const double> values) const override {
    detail::check_detector_input(instance, graph, values);
    std::vector<double> p(graph.size(), 0.0);
    std::vector<double> f(static_cast<std::size_t>(t_) + 1);
    std::vector<int> s(f.size());
    const int half_up = (t_ + 1) / 2, half_down = t_ / 2;
    for (const auto& e : graph.edges()) {
      if (p[e.i] == 1.0 && p[e.j] == 1.0) continue;
      const auto a = instance.point(e.i), b = instance.point(e.j);
      cut_->sample_segment(a, b, t_, f);
      for (std::size_t k = 0; k < f.size(); ++k) s[k] = detail::sign(f[k]);
      const int si = s.front(), sj = s.back();
      if (p[e.i] == 0.0) {
        bool hit = si == 0;
        for (int tau = 1; !hit && tau <= half_up; ++tau) hit = s[static_cast<std::size_t>(tau)] != si;
        if (hit) p[e.i] = 1.0;
      }
      if (p[e.j] == 0.0) {
        bool hit = sj == 0;
        for (int tau = half_down; !hit && tau <= t_ - 1; ++tau) hit = s[static_cast<std::size_t>(tau)] != sj;
        if (hit) p[e.j] = 1.0;
      }
    }
    return p;
  }

 private:
  CutPtr cut_;
  int t_;
};

/// Exact troubled-point indicator for cuts with closed-form segment roots.
///
/// x_i is troubled when the root of {x_i, x_j} nearest to x_i is no farther
/// from x_i than from x_j. A cut vanishing on a whole edge counts as roots at
/// both ends.
class ExactOracle final : public Detector {
 public:
  explicit ExactOracle(CutPtr cut) : cut_(std::move(cut)) {
    if (!cut_) fail(ErrorKind::invalid_argument, "exact oracle needs a cut");
  }

  std::string name() const override { return "exact:" + cut_->kind(); }

  std::vector<double> detect(const SparseGrid& instance, const GridGraph& graph,
                             std::span<const double> values) const override {
    detail::check_detector_input(instance, graph, values);
    std::vector<double> p(graph.size(), 0.0);
    for (const auto& e : graph.edges()) {
      const auto a = instance.point(e.i), b = instance.point(e.j);
      auto roots = cut_->segment_roots(a, b);
      if (!roots)
        fail(ErrorKind::unsupported_cut, "cut '" + cut_->kind() +
                                             "' has no closed-form edge intersection; use the zlevel:<t> detector");
      if (roots->empty()) continue;
      if (roots->front() <= 0.5) p[e.i] = 1.0;
      if (roots->back() >= 0.5) p[e.j] = 1.0;
    }
    return p;
  }

 private:
  CutPtr cut_;
};

}  // namespace sgdd
