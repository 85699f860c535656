#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <bit>
#include <map>
#include <set>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sgdd/detectors.hpp"
#include "sgdd/error.hpp"
#include "sgdd/grid_graph.hpp"
#include "sgdd/sparse_grid.hpp"

namespace sgdd {

using Function = std::function<double(std::span<const double>)>;

enum class BoundaryPolicy { clip_stop, ignore };
enum class RefinementRule { incident, global };

inline std::string to_string(BoundaryPolicy p) { return p == BoundaryPolicy::clip_stop ? "clip-stop" : "ignore"; }
inline BoundaryPolicy parse_boundary_policy(const std::string& s) {
  if (s == "clip-stop") return BoundaryPolicy::clip_stop;
  if (s == "ignore") return BoundaryPolicy::ignore;
  fail(ErrorKind::config, "unknown boundary policy '" + s + "' (expected clip-stop or ignore)");
}
inline std::string to_string(RefinementRule r) { return r == RefinementRule::incident ? "incident" : "global"; }
inline RefinementRule parse_refinement_rule(const std::string& s) {
  if (s == "incident") return RefinementRule::incident;
  if (s == "global") return RefinementRule::global;
  fail(ErrorKind::config, "unknown refinement rule '" + s + "' (expected incident or global)");
}

struct EngineConfig {
  Box domain = Box::from_bounds(-1.0, 1.0, 2);
  double lambda_min = 1.0 / 32.0;
  double tau = 0.5;
  BoundaryPolicy boundary = BoundaryPolicy::clip_stop;
  RefinementRule refinement = RefinementRule::incident;
  bool cache_evaluations = true;
  std::optional<std::size_t> evaluation_budget;

  void validate() const {
    if (!(lambda_min > 0) || !std::isfinite(lambda_min)) fail(ErrorKind::config, "lambda_min must be positive");
    if (!(tau > 0.0 && tau <= 1.0)) fail(ErrorKind::config, "tau must lie in (0, 1]");
  }
};

/// A box given by its center and edge length.
struct BoxTask {
  std::vector<double> center;
  double edge = 0.0;
};

using PointKey = std::vector<std::int64_t>;

struct PointKeyHash {
  std::size_t operator()(const PointKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto v : k) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct TroubledPoint {
  std::vector<double> x;
  PointKey key;
  double lambda = 0.0;  // incident edge length that ended the branch
  bool boundary_stopped = false;
  int generation = 0;
};

/// (center key, edge exponent): edge = root edge / 2^exponent.
struct TaskKey {
  PointKey center;
  int exponent = 0;
  friend bool operator==(const TaskKey&, const TaskKey&) = default;
  friend auto operator<=>(const TaskKey&, const TaskKey&) = default;
};

struct DetectionRun {
  std::vector<TroubledPoint> troubled;  // sorted by key
  std::vector<TaskKey> visited_tasks;   // the set C, sorted
  std::vector<std::size_t> generation_sizes;
  std::size_t visited_points = 0;
  std::size_t evaluations = 0;
  std::size_t cache_hits = 0;
  std::size_t detector_invocations = 0;
  std::size_t tasks_processed = 0;
  bool truncated = false;

  int generations() const { return static_cast<int>(generation_sizes.size()); }
};

/// Called once per processed grid with the instance, its evaluations and p.
using VisitObserver =
    std::function<void(const SparseGrid& instance, std::span<const double> values, std::span<const double> p)>;

/// Global dyadic frame anchored at the lower corner of the domain: every
/// coordinate the engine touches is lower + num * edge / 2^bits.
class DyadicFrame {
 public:
  DyadicFrame(const Box& domain, int bits) : domain_(domain), bits_(bits) {
    if (bits_ < 1 || bits_ > 60) fail(ErrorKind::config, "dyadic frame depth out of range");
  }

  int bits() const { return bits_; }
  const Box& domain() const { return domain_; }
  std::int64_t extent() const { return std::int64_t{1} << bits_; }

  double to_real(std::int64_t num, int axis) const {
    return domain_.lower(axis) + std::ldexp(static_cast<double>(num), -bits_) * domain_.edge;
  }

  std::optional<std::int64_t> to_num(double x, int axis) const {
    const double v = std::ldexp((x - domain_.lower(axis)) / domain_.edge, bits_);
    const double r = std::nearbyint(v);
    if (r != v || std::abs(r) > 9.0e15) return std::nullopt;
    const auto num = static_cast<std::int64_t>(r);
    if (to_real(num, axis) != x) return std::nullopt;
    return num;
  }

  bool inside(const PointKey& k) const {
    for (auto v : k)
      if (v < 0 || v > extent()) return false;
    return true;
  }

  std::vector<double> to_point(const PointKey& k) const {
    std::vector<double> x(k.size());
    for (std::size_t a = 0; a < k.size(); ++a) x[a] = to_real(k[a], static_cast<int>(a));
    return x;
  }

 private:
  Box domain_;
  int bits_;
};

/// Sparse-grid driven discontinuity search over a domain.
class DetectionEngine {
 public:
  DetectionEngine(const SparseGrid& reference, const GridGraph& graph, DetectorPtr detector, EngineConfig config)
      : reference_(reference), graph_(graph), detector_(std::move(detector)), config_(std::move(config)) {
    config_.validate();
    if (graph_.size() != reference_.size())
      fail(ErrorKind::dimension_mismatch, "graph and reference grid sizes differ");
    if (config_.domain.dim() != reference_.dim())
      fail(ErrorKind::dimension_mismatch, "domain dimension " + std::to_string(config_.domain.dim()) +
                                              " does not match grid dimension " + std::to_string(reference_.dim()));
    if (graph_.edges().empty()) fail(ErrorKind::degenerate_graph, "reference graph has no edges; refinement is undefined");
  }

  void set_observer(VisitObserver obs) { observer_ = std::move(obs); }
  const EngineConfig& config() const { return config_; }

  /// Default start: the whole domain as a single box.
  std::vector<BoxTask> root_task() const { return {BoxTask{config_.domain.center, config_.domain.edge}}; }

  /// Sequential FIFO processing.
  DetectionRun run_basic(const Function& g, const std::vector<BoxTask>& initial) { return run(g, initial, false); }
  /// One batched detector call per generation.
  DetectionRun run_batched(const Function& g, const std::vector<BoxTask>& initial) { return run(g, initial, true); }

 private:
  struct Task {
    TaskKey key;
    int generation = 1;
  };

  struct State {
    std::deque<Task> queue;
    std::set<TaskKey> seen;  // processed or queued
    std::vector<TaskKey> visited;
    std::unordered_map<PointKey, double, PointKeyHash> cache;
    std::map<PointKey, TroubledPoint> troubled;
    DetectionRun run;
  };

  int log2_m() const { return reference_.log2_resolution(); }

  int max_exponent() const {
    int e = 0;
    while (std::ldexp(config_.domain.edge, -(e + 1)) >= config_.lambda_min) ++e;
    return e;
  }

  TaskKey make_initial_key(const DyadicFrame& frame, const BoxTask& t) const {
    if (static_cast<int>(t.center.size()) != reference_.dim())
      fail(ErrorKind::dimension_mismatch, "initial task has the wrong dimension");
    const double ratio = config_.domain.edge / t.edge;
    const int e = static_cast<int>(std::lround(std::log2(ratio)));
    if (!(t.edge > 0) || e < 0 || std::ldexp(config_.domain.edge, -e) != t.edge)
      fail(ErrorKind::config, "initial box edge must be the domain edge divided by a power of two");
    TaskKey key{PointKey(t.center.size()), e};
    for (std::size_t a = 0; a < t.center.size(); ++a) {
      auto num = frame.to_num(t.center[a], static_cast<int>(a));
      if (!num) fail(ErrorKind::config, "initial box center is off the dyadic lattice of the domain");
      key.center[a] = *num;
    }
    // its own lattice must land on the frame too
    const std::int64_t half = std::int64_t{1} << (frame.bits() - e - 1);
    const std::int64_t step = std::int64_t{1} << (frame.bits() - e - log2_m());
    for (auto c : key.center)
      if ((c - half) % step != 0) fail(ErrorKind::config, "initial box center is off the dyadic lattice of the domain");
    return key;
  }

  SparseGrid instance_of(const DyadicFrame& frame, const TaskKey& t) const {
    return reference_.similar(frame.to_point(t.center), std::ldexp(config_.domain.edge, -t.exponent));
  }

  PointKey point_key(const DyadicFrame& frame, const TaskKey& t, std::size_t i) const {
    const int shift = frame.bits() - t.exponent - log2_m();
    const std::int64_t half = std::int64_t{1} << (frame.bits() - t.exponent - 1);
    auto k = reference_.lattice(i);
    PointKey out(t.center.size());
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = t.center[a] - half + (static_cast<std::int64_t>(k[a]) << shift);
    return out;
  }

  /// Evaluations for one task; false when the budget is exhausted.
  bool evaluate(const Function& g, const DyadicFrame& frame, const TaskKey& t, State& st, std::span<double> values) const {
    const std::size_t n = reference_.size();
    std::vector<PointKey> keys(n);
    std::size_t fresh = 0;
    for (std::size_t i = 0; i < n; ++i) {
      keys[i] = point_key(frame, t, i);
      if (!config_.cache_evaluations || !st.cache.count(keys[i])) ++fresh;
    }
    if (config_.evaluation_budget && st.run.evaluations + fresh > *config_.evaluation_budget) return false;
    for (std::size_t i = 0; i < n; ++i) {
      const bool outside = !frame.inside(keys[i]);
      if (outside && config_.boundary == BoundaryPolicy::ignore) {
        values[i] = out_of_domain;
        continue;
      }
      auto it = st.cache.find(keys[i]);
      if (config_.cache_evaluations && it != st.cache.end()) {
        values[i] = it->second;
        ++st.run.cache_hits;
        continue;
      }
      values[i] = g(frame.to_point(keys[i]));
      ++st.run.evaluations;
      if (it == st.cache.end()) st.cache.emplace(keys[i], values[i]);
    }
    return true;
  }

  void absorb(const DyadicFrame& frame, const Task& task, std::span<const double> values, std::span<double> p,
              State& st, std::vector<Task>& children) const {
    for (std::size_t i = 0; i < p.size(); ++i)
      if (is_sentinel(values[i])) p[i] = 0.0;
    const SparseGrid::Coord global_len = graph_.global_max_lattice_length();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!(p[i] >= config_.tau)) continue;
      const SparseGrid::Coord len =
          config_.refinement == RefinementRule::incident ? graph_.incident_max_lattice_length(i) : global_len;
      if (len == 0) fail(ErrorKind::degenerate_graph, "troubled point has no incident edge");
      const int child_exp = task.key.exponent + log2_m() - std::countr_zero(static_cast<std::uint32_t>(len));
      const double lambda = std::ldexp(config_.domain.edge, -child_exp);
      auto key = point_key(frame, task.key, i);
      const bool outside = !frame.inside(key);
      if (!outside && lambda >= config_.lambda_min) {
        TaskKey child{std::move(key), child_exp};
        if (st.seen.insert(child).second) children.push_back(Task{std::move(child), task.generation + 1});
        continue;
      }
      if (st.troubled.count(key)) continue;
      TroubledPoint tp;
      tp.x = frame.to_point(key);
      tp.lambda = lambda;
      tp.boundary_stopped = outside;
      tp.generation = task.generation;
      tp.key = key;
      st.troubled.emplace(std::move(key), std::move(tp));
    }
  }

  void count_generation(State& st, int generation) const {
    auto& sizes = st.run.generation_sizes;
    if (static_cast<int>(sizes.size()) < generation) sizes.resize(static_cast<std::size_t>(generation), 0);
    ++sizes[static_cast<std::size_t>(generation - 1)];
  }

  DetectionRun run(const Function& g, const std::vector<BoxTask>& initial, bool batched) {
    int deepest = max_exponent();
    // provisional frame to read initial exponents
    std::vector<TaskKey> starts;
    {
      int e0 = 0;
      for (const auto& t : initial)
        e0 = std::max(e0, static_cast<int>(std::lround(std::log2(config_.domain.edge / t.edge))));
      deepest = std::max(deepest, e0);
      frame_bits_ = deepest + log2_m() + 1;
    }
    const DyadicFrame frame(config_.domain, frame_bits_);
    State st;
    for (const auto& t : initial) {
      auto key = make_initial_key(frame, t);
      if (st.seen.insert(key).second) st.queue.push_back(Task{std::move(key), 1});
    }

    const std::size_t n = reference_.size();
    std::vector<double> values(n), p(n);
    if (!batched) {
      while (!st.queue.empty()) {
        Task task = std::move(st.queue.front());
        st.queue.pop_front();
        if (!evaluate(g, frame, task.key, st, values)) {
          st.run.truncated = true;
          break;
        }
        const auto inst = instance_of(frame, task.key);
        auto out = detector_->detect(inst, graph_, values);
        std::copy(out.begin(), out.end(), p.begin());
        ++st.run.detector_invocations;
        st.visited.push_back(task.key);
        count_generation(st, task.generation);
        std::vector<Task> children;
        absorb(frame, task, values, p, st, children);
        if (observer_) observer_(inst, values, p);
        for (auto& c : children) st.queue.push_back(std::move(c));
      }
    } else {
      std::vector<Task> current(st.queue.begin(), st.queue.end());
      st.queue.clear();
      while (!current.empty()) {
        std::vector<SparseGrid> instances;
        std::vector<double> gamma;
        std::size_t taken = 0;
        for (; taken < current.size(); ++taken) {
          if (!evaluate(g, frame, current[taken].key, st, values)) {
            st.run.truncated = true;
            break;
          }
          gamma.insert(gamma.end(), values.begin(), values.end());
          instances.push_back(instance_of(frame, current[taken].key));
        }
        std::vector<double> batch_p(gamma.size());
        if (taken > 0) {
          detector_->detect_batch(instances, graph_, gamma, batch_p);
          ++st.run.detector_invocations;
        }
        std::vector<Task> next;
        for (std::size_t k = 0; k < taken; ++k) {
          st.visited.push_back(current[k].key);
          count_generation(st, current[k].generation);
          std::span<const double> vk(gamma.data() + k * n, n);
          std::span<double> pk(batch_p.data() + k * n, n);
          absorb(frame, current[k], vk, pk, st, next);
          if (observer_) observer_(instances[k], vk, pk);
        }
        if (st.run.truncated) break;
        current = std::move(next);
      }
    }

    st.run.tasks_processed = st.visited.size();
    st.run.visited_points = st.cache.size();
    std::sort(st.visited.begin(), st.visited.end());
    st.run.visited_tasks = std::move(st.visited);
    st.run.troubled.reserve(st.troubled.size());
    for (auto& [k, tp] : st.troubled) st.run.troubled.push_back(std::move(tp));
    return std::move(st.run);
  }

  SparseGrid reference_;
  GridGraph graph_;
  DetectorPtr detector_;
  EngineConfig config_;
  VisitObserver observer_;
  int frame_bits_ = 1;
};

}  // namespace sgdd
