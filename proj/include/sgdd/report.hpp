#pragma once

#include <ostream>
#include <string>

#include <json.hpp>

#include "sgdd/engine.hpp"
#include "sgdd/evaluation.hpp"
#include "sgdd/grid_graph.hpp"
#include "sgdd/model_io.hpp"
#include "sgdd/sparse_grid.hpp"

namespace sgdd {

inline nlohmann::json grid_to_json(const SparseGrid& grid, const GridGraph& graph, bool with_diameter = true) {
  using nlohmann::json;
  json j;
  j["spec"] = grid_spec_to_json(grid.spec());
  j["box"] = {{"center", grid.box().center}, {"edge", grid.box().edge}};
  j["n_points"] = grid.size();
  j["h_max"] = grid.max_level();
  j["resolution"] = grid.resolution();
  json pts = json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) pts.push_back(grid.point(i));
  j["points"] = pts;
  json edges = json::array();
  for (const auto& e : graph.edges()) edges.push_back({e.i, e.j, e.axis, e.dyadic_length, e.weight});
  j["edges"] = {{"columns", {"i", "j", "axis", "d", "weight"}}, {"rows", edges}};
  json adj = json::array();
  for (const auto& e : graph.edges()) {
    adj.push_back({e.i, e.j, e.weight});
    adj.push_back({e.j, e.i, e.weight});
  }
  j["adjacency"] = adj;
  if (with_diameter) j["diameter"] = graph_diameter(graph);
  return j;
}

inline nlohmann::json engine_config_to_json(const EngineConfig& c) {
  nlohmann::json j{{"domain", {{"center", c.domain.center}, {"edge", c.domain.edge}}},
                   {"lambda_min", c.lambda_min},
                   {"tau", c.tau},
                   {"boundary_policy", to_string(c.boundary)},
                   {"refinement", to_string(c.refinement)},
                   {"cache_evaluations", c.cache_evaluations}};
  if (c.evaluation_budget) j["evaluation_budget"] = *c.evaluation_budget;
  return j;
}

inline nlohmann::json run_to_json(const DetectionRun& run) {
  using nlohmann::json;
  json t = json::array();
  for (const auto& tp : run.troubled)
    t.push_back({{"x", tp.x}, {"lambda", tp.lambda}, {"boundary_stopped", tp.boundary_stopped}, {"generation", tp.generation}});
  return {{"counters",
           {{"troubled", run.troubled.size()},
            {"visited_points", run.visited_points},
            {"evaluations", run.evaluations},
            {"cache_hits", run.cache_hits},
            {"detector_invocations", run.detector_invocations},
            {"tasks", run.tasks_processed},
            {"generations", run.generations()},
            {"truncated", run.truncated}}},
          {"generation_sizes", run.generation_sizes},
          {"troubled", t}};
}

/// Troubled points as rows read back from a run report.
inline std::vector<TroubledPoint> troubled_from_json(const nlohmann::json& report) {
  std::vector<TroubledPoint> out;
  for (const auto& r : report.at("run").at("troubled")) {
    TroubledPoint tp;
    tp.x = r.at("x").get<std::vector<double>>();
    tp.lambda = r.value("lambda", 0.0);
    tp.boundary_stopped = r.value("boundary_stopped", false);
    tp.generation = r.value("generation", 0);
    out.push_back(std::move(tp));
  }
  return out;
}

inline void write_troubled_csv(const DetectionRun& run, std::ostream& os) {
  if (run.troubled.empty()) {
    os << "lambda,boundary_stopped\n";
    return;
  }
  const std::size_t n = run.troubled.front().x.size();
  for (std::size_t a = 0; a < n; ++a) os << "x" << (a + 1) << ",";
  os << "lambda,boundary_stopped\n";
  os.precision(17);
  for (const auto& tp : run.troubled) {
    for (double v : tp.x) os << v << ",";
    os << tp.lambda << "," << (tp.boundary_stopped ? 1 : 0) << "\n";
  }
}

inline nlohmann::json tpr_to_json(const TprReport& r) {
  nlohmann::json j{{"defined", r.defined},
                   {"troubled", r.troubled_count},
                   {"true_troubled", r.true_count},
                   {"visited_points", r.visited_count},
                   {"sign_samples", r.sign_samples}};
  if (r.defined) j["tpr"] = r.tpr;
  return j;
}

inline void write_verdicts_csv(const std::vector<TroubledPoint>& t, const TprReport& r, std::ostream& os) {
  os.precision(17);
  for (std::size_t k = 0; k < t.size(); ++k) {
    for (double v : t[k].x) os << v << ",";
    os << (r.verdicts[k] ? 1 : 0) << "\n";
  }
}

}  // namespace sgdd
