#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "sgdd/error.hpp"
#include "sgdd/grid_graph.hpp"
#include "sgdd/network.hpp"
#include "sgdd/sparse_grid.hpp"
#include "sgdd/training.hpp"

namespace sgdd {

inline constexpr const char* model_format = "sgdd-model";
inline constexpr int model_version = 1;
/// Versions the GI layer formulation stored in model files.
inline constexpr const char* gi_formulation = "gi-v1:w[j,k,f]*A^[j,i],A^=A+I,bias[i,f],fan=mean-col-nnz";

/// FNV-1a over the spec and the lattice of a reference grid.
inline std::uint64_t grid_hash(const SparseGrid& grid) {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&](std::int64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>((v >> (8 * b)) & 0xff);
      h *= 1099511628211ULL;
    }
  };
  mix(grid.spec().dim);
  mix(static_cast<int>(grid.spec().rule));
  mix(grid.spec().level);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (auto c : grid.lattice(i)) mix(c);
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int k = 15; k >= 0; --k, v >>= 4) s[static_cast<std::size_t>(k)] = digits[v & 0xf];
  return s;
}

inline nlohmann::json grid_spec_to_json(const GridSpec& s) {
  return {{"dim", s.dim}, {"rule", to_string(s.rule)}, {"level", s.level}};
}

inline GridSpec grid_spec_from_json(const nlohmann::json& j) {
  GridSpec s;
  s.dim = j.at("dim").get<int>();
  s.rule = parse_index_rule(j.at("rule").get<std::string>());
  s.level = j.at("level").get<int>();
  return s;
}

struct LoadedModel {
  std::shared_ptr<nn::Network> network;
  GridSpec spec;
  std::string grid_hash;
  nlohmann::json history;
};

inline nlohmann::json model_to_json(nn::Network& net, const SparseGrid& reference, const GridGraph& graph,
                                    const nn::TrainHistory* history = nullptr) {
  using nlohmann::json;
  const auto& cfg = net.config();
  json j;
  j["format"] = model_format;
  j["version"] = model_version;
  j["gi_formulation"] = gi_formulation;
  j["config"] = {{"kind", nn::to_string(cfg.kind)},  {"features", cfg.features},     {"slope", cfg.slope},
                 {"bn_momentum", cfg.bn_momentum}, {"bn_epsilon", cfg.bn_epsilon}, {"seed", cfg.seed},
                 {"residual_blocks", net.blocks()}};
  j["grid"] = grid_spec_to_json(reference.spec());
  j["grid_hash"] = hex64(grid_hash(reference));
  json adj = json::array();
  for (const auto& e : graph.edges()) adj.push_back({e.i, e.j, e.weight});
  j["adjacency"] = {{"n", graph.size()}, {"triples", adj}};
  json params = json::array();
  for (nn::Param* p : net.params()) params.push_back({{"name", p->name}, {"values", p->value}});
  j["parameters"] = params;
  json state = json::array();
  for (nn::Param* p : net.state()) state.push_back({{"name", p->name}, {"values", p->value}});
  j["batch_norm_statistics"] = state;
  json hist = json::array();
  if (history)
    for (const auto& r : history->epochs)
      hist.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"lr", r.learning_rate}});
  j["history"] = hist;
  return j;
}

inline void save_model(nn::Network& net, const SparseGrid& reference, const GridGraph& graph, const std::string& path,
                       const nn::TrainHistory* history = nullptr) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << model_to_json(net, reference, graph, history).dump(1) << "\n";
  if (!out) fail(ErrorKind::io, "short write on " + path);
}

inline LoadedModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != model_format) fail(ErrorKind::io, "not a model document");
  if (j.at("version").get<int>() != model_version) fail(ErrorKind::io, "unsupported model version");
  if (j.at("gi_formulation").get<std::string>() != gi_formulation)
    fail(ErrorKind::io, "model uses a different graph-instructed layer formulation");
  const auto& c = j.at("config");
  nn::ModelConfig cfg;
  cfg.kind = nn::parse_model_kind(c.at("kind").get<std::string>());
  cfg.features = c.at("features").get<std::size_t>();
  cfg.slope = c.at("slope").get<double>();
  cfg.bn_momentum = c.at("bn_momentum").get<double>();
  cfg.bn_epsilon = c.at("bn_epsilon").get<double>();
  cfg.seed = c.at("seed").get<std::uint64_t>();
  const int blocks = c.at("residual_blocks").get<int>();

  const auto& adj = j.at("adjacency");
  const auto n = adj.at("n").get<std::size_t>();
  std::vector<GridEdge> edges;
  for (const auto& t : adj.at("triples")) {
    GridEdge e;
    e.i = t.at(0).get<std::size_t>();
    e.j = t.at(1).get<std::size_t>();
    e.weight = t.at(2).get<double>();
    if (e.i >= n || e.j >= n) fail(ErrorKind::io, "adjacency triple out of range");
    edges.push_back(e);
  }
  const auto matrix = adjacency_matrix(edges, n);

  LoadedModel m;
  m.network = std::make_shared<nn::Network>(cfg, matrix, blocks);
  auto load = [](const std::vector<nn::Param*>& dst, const nlohmann::json& src, const char* what) {
    if (src.size() != dst.size()) fail(ErrorKind::io, std::string("model ") + what + " count mismatch");
    for (std::size_t k = 0; k < dst.size(); ++k) {
      auto v = src.at(k).at("values").get<std::vector<double>>();
      if (v.size() != dst[k]->size()) fail(ErrorKind::io, std::string("model ") + what + " shape mismatch");
      dst[k]->value = std::move(v);
    }
  };
  load(m.network->params(), j.at("parameters"), "parameter");
  load(m.network->state(), j.at("batch_norm_statistics"), "statistics");
  m.spec = grid_spec_from_json(j.at("grid"));
  m.grid_hash = j.at("grid_hash").get<std::string>();
  m.history = j.value("history", nlohmann::json::array());
  return m;
}

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io, path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace sgdd
