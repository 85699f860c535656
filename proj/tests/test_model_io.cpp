#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <vector>

#include "sgdd/model_io.hpp"
#include "sgdd/nn_detector.hpp"

using namespace sgdd;

namespace {

SparseGrid grid(int level = 5) { return SparseGrid::build({2, IndexRule::sum, level}, Box::from_bounds(-1, 1, 2)); }

nn::Batch random_inputs(std::size_t rows, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  nn::Batch x(rows, n);
  for (auto& v : x.data) v = u(rng);
  return x;
}

// Perturbs batch-norm statistics so that a round trip has something to carry.
void touch_statistics(nn::Network& net) {
  double k = 0.1;
  for (nn::Param* p : net.state())
    for (auto& v : p->value) v += (k += 0.01);
}

}  // namespace

TEST(ModelIo, RoundTripIsBitExact) {
  auto ref = grid();
  auto graph = GridGraph::build(ref);
  for (auto kind : {nn::ModelKind::ginn, nn::ModelKind::mlp}) {
    nn::ModelConfig cfg;
    cfg.kind = kind;
    cfg.features = 4;
    cfg.seed = 21;
    auto net = nn::build_archetype(cfg, graph);
    touch_statistics(*net);
    nn::TrainHistory hist;
    hist.epochs.push_back({1, 0.5, 0.4, 1e-3});
    const auto path = (std::filesystem::temp_directory_path() / "sgdd_model_roundtrip.json").string();
    save_model(*net, ref, graph, path, &hist);
    auto loaded = load_model(path);
    std::filesystem::remove(path);
    EXPECT_EQ(loaded.spec, ref.spec());
    EXPECT_EQ(loaded.grid_hash, hex64(grid_hash(ref)));
    EXPECT_EQ(loaded.network->blocks(), net->blocks());
    EXPECT_EQ(loaded.history.size(), 1u);
    auto a = net->params(), b = loaded.network->params();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k]->value, b[k]->value);
    const auto x = random_inputs(5, ref.size(), 3);
    auto ya = net->predict(x), yb = loaded.network->predict(x);
    EXPECT_EQ(std::memcmp(ya.data.data(), yb.data.data(), ya.data.size() * sizeof(double)), 0);
  }
}

TEST(ModelIo, RejectsForeignDocuments) {
  auto ref = grid(4);
  auto graph = GridGraph::build(ref);
  nn::ModelConfig cfg;
  cfg.features = 2;
  nn::Network net(cfg, graph.adjacency(), 1);
  auto doc = model_to_json(net, ref, graph);
  auto expect_io = [](const nlohmann::json& j) {
    try {
      model_from_json(j);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::io);
    }
  };
  auto bad = doc;
  bad["gi_formulation"] = "something-else";
  expect_io(bad);
  bad = doc;
  bad["version"] = 99;
  expect_io(bad);
  bad = doc;
  bad["format"] = "other";
  expect_io(bad);
  bad = doc;
  bad["parameters"].erase(0);
  expect_io(bad);
  EXPECT_THROW(load_model("/nonexistent/model.json"), Error);
}

TEST(ModelIo, GridHashTracksLatticeNotBox) {
  auto a = grid(5), b = grid(6);
  EXPECT_NE(grid_hash(a), grid_hash(b));
  auto moved = SparseGrid::build({2, IndexRule::sum, 5}, Box::from_bounds(3, 10, 2));
  EXPECT_EQ(grid_hash(a), grid_hash(moved));
  EXPECT_EQ(hex64(0x1234abcdULL), "000000001234abcd");
}

TEST(NnDetector, SentinelsAndBatches) {
  auto ref = grid(4);
  auto graph = GridGraph::build(ref);
  nn::ModelConfig cfg;
  cfg.features = 3;
  cfg.seed = 2;
  auto net = std::make_shared<nn::Network>(cfg, graph.adjacency(), 1);
  NnDetector det(net);
  const std::size_t n = ref.size();
  auto x = random_inputs(3, n, 4);
  x.row(1)[0] = out_of_domain;
  x.row(1)[5] = out_of_domain;
  std::fill(x.row(2), x.row(2) + n, out_of_domain);
  std::vector<SparseGrid> inst(3, ref);
  std::vector<double> out(3 * n);
  det.detect_batch(inst, graph, x.data, out);
  // row 0 equals the raw network on gamma-scaled input
  nn::Batch g0(1, n);
  preprocess_gamma(std::span<const double>(x.row(0), n), std::span<double>(g0.row(0), n));
  auto y0 = net->predict(g0);
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(out[i], y0.data[i]);
  EXPECT_EQ(out[n + 0], 0.0);
  EXPECT_EQ(out[n + 5], 0.0);
  EXPECT_GT(out[n + 1], 0.0);
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(out[2 * n + i], 0.0);
  auto single = det.detect(ref, graph, std::span<const double>(x.row(1), n));
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(single[i], out[n + i]);
  std::vector<double> wrong(n + 1);
  EXPECT_THROW(det.detect(ref, graph, wrong), Error);
}
