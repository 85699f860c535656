#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "sgdd/network.hpp"
#include "sgdd/training.hpp"

using namespace sgdd;
using namespace sgdd::nn;

namespace {

SparseMatrix two_nodes() {
  SparseMatrix a;
  a.n = 2;
  a.row_ptr = {0, 1, 2};
  a.cols = {1, 0};
  a.values = {0.5, 0.5};
  return a;
}

SparseGrid small_grid() { return SparseGrid::build({2, IndexRule::sum, 4}, Box::from_bounds(-1, 1, 2)); }

Batch random_batch(std::size_t rows, std::size_t width, std::mt19937_64& rng, double scale = 1.0) {
  Batch b(rows, width);
  std::normal_distribution<double> normal(0, scale);
  for (auto& v : b.data) v = normal(rng);
  return b;
}

double five_point(const std::function<double(double)>& f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

// Scalar probe loss sum(c .* layer(x)); compares analytic dx and parameter
// gradients with five-point central differences.
void check_layer_gradients(Layer& layer, Batch x, std::mt19937_64& rng, bool training, double tol) {
  Batch y;
  layer.forward(x, y, training);
  Batch c = random_batch(y.rows, y.width, rng);
  auto probe = [&](const Batch& input) {
    Batch out;
    layer.forward(input, out, training);
    double s = 0;
    for (std::size_t q = 0; q < out.data.size(); ++q) s += c.data[q] * out.data[q];
    return s;
  };
  for (Param* p : layer.params()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  layer.forward(x, y, training);
  Batch dx;
  layer.backward(c, dx);
  const double h = 1e-5;
  for (std::size_t q = 0; q < x.data.size(); ++q) {
    const double orig = x.data[q];
    auto f = [&](double v) {
      x.data[q] = v;
      return probe(x);
    };
    const double num = five_point(f, orig, h);
    x.data[q] = orig;
    EXPECT_NEAR(dx.data[q], num, tol * (1 + std::abs(num))) << layer.type() << " input " << q;
  }
  for (Param* p : layer.params()) {
    std::vector<double> analytic = p->grad;
    for (std::size_t q = 0; q < p->size(); ++q) {
      const double orig = p->value[q];
      auto f = [&](double v) {
        p->value[q] = v;
        return probe(x);
      };
      const double num = five_point(f, orig, h);
      p->value[q] = orig;
      EXPECT_NEAR(analytic[q], num, tol * (1 + std::abs(num))) << layer.type() << " " << p->name << " " << q;
    }
  }
}

// Redraws entries that sit within `margin` of zero.
void avoid_kink(Batch& x, std::mt19937_64& rng, double margin) {
  std::normal_distribution<double> normal(0, 1);
  for (auto& v : x.data)
    while (std::abs(v) < margin) v = normal(rng);
}

}  // namespace

TEST(GraphInstructed, TwoNodeHandExample) {
  GraphInstructed gi(two_nodes(), 1, 1);
  auto ps = gi.params();
  ps[0]->value = {2.0, 3.0};   // w_0, w_1
  ps[1]->value = {0.1, -0.2};  // b_0, b_1
  Batch x(1, 2);
  x.data = {1.0, 4.0};
  Batch y;
  gi.forward(x, y, false);
  // y_0 = 1*1*2 + 0.5*4*3 + 0.1, y_1 = 0.5*1*2 + 1*4*3 - 0.2
  EXPECT_DOUBLE_EQ(y.data[0], 8.1);
  EXPECT_DOUBLE_EQ(y.data[1], 12.8);
}

TEST(GraphInstructed, EqualsMaskedDenseLayer) {
  auto g = SparseGrid::build({2, IndexRule::sum, 6}, Box::from_bounds(-1, 1, 2));
  auto graph = GridGraph::build(g);
  std::mt19937_64 rng(1);
  for (auto [k, f] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 3}}) {
    GraphInstructed gi(graph.adjacency(), k, f);
    gi.initialize(rng);
    auto ps = gi.params();
    for (auto& b : ps[1]->value) b = std::normal_distribution<double>(0, 1)(rng);
    const auto m = gi.effective_matrix();
    const std::size_t n = g.size(), in = n * k, out = n * f;
    const auto adj = graph.adjacency().dense();
    // zero pattern follows A + I
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i)
        if (i != j && adj[j * n + i] == 0.0)
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t c = 0; c < f; ++c) EXPECT_EQ(m[(j * k + a) * out + i * f + c], 0.0);
    Batch x = random_batch(3, in, rng), y;
    gi.forward(x, y, false);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t o = 0; o < out; ++o) {
        double s = ps[1]->value[o];
        for (std::size_t q = 0; q < in; ++q) s += x.row(r)[q] * m[q * out + o];
        EXPECT_NEAR(y.row(r)[o], s, 1e-12);
      }
  }
}

TEST(Gradients, EveryLayerMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  auto graph = GridGraph::build(small_grid());
  const std::size_t n = graph.size();
  {
    Dense d(5, 4);
    d.initialize(rng);
    check_layer_gradients(d, random_batch(3, 5, rng), rng, true, 1e-7);
  }
  {
    GraphInstructed gi(graph.adjacency(), 2, 3);
    gi.initialize(rng);
    check_layer_gradients(gi, random_batch(2, n * 2, rng), rng, true, 1e-7);
  }
  {
    LeakyRelu act(6, 0.3);
    Batch x = random_batch(4, 6, rng);
    avoid_kink(x, rng, 1e-3);
    check_layer_gradients(act, x, rng, true, 1e-7);
  }
  {
    Sigmoid s(6);
    check_layer_gradients(s, random_batch(4, 6, rng, 2.0), rng, true, 1e-7);
  }
  {
    FeatureMean fm(4, 3);
    check_layer_gradients(fm, random_batch(2, 12, rng), rng, true, 1e-7);
  }
  for (bool training : {true, false}) {
    BatchNorm bn(3, 4);
    auto ps = bn.params();
    for (auto& v : ps[0]->value) v = 1.0 + 0.3 * std::normal_distribution<double>(0, 1)(rng);
    for (auto& v : ps[1]->value) v = std::normal_distribution<double>(0, 1)(rng);
    check_layer_gradients(bn, random_batch(5, 12, rng, 2.0), rng, training, 1e-6);
  }
}

TEST(Gradients, WholeNetworkMatchesFiniteDifferences) {
  auto graph = GridGraph::build(small_grid());
  const std::size_t n = graph.size();
  for (auto kind : {ModelKind::ginn, ModelKind::mlp}) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.features = 3;
    cfg.seed = 4;
    Network net(cfg, graph.adjacency(), 2);
    std::mt19937_64 rng(5);
    Batch x = random_batch(6, n, rng);
    std::vector<double> p(6 * n);
    for (auto& v : p) v = rng() % 3 == 0 ? 1.0 : 0.0;
    WeightedBce bce;
    auto loss = [&] {
      Batch y;
      net.forward(x, y, true);
      return bce.loss(y, p);
    };
    net.zero_grad();
    Batch y, g, dx;
    net.forward(x, y, true);
    bce.gradient(y, p, g);
    net.backward(g, dx);
    std::size_t checked = 0;
    for (Param* prm : net.params()) {
      const std::vector<double> analytic = prm->grad;
      for (std::size_t q = 0; q < prm->size(); q += 1 + prm->size() / 7) {
        const double orig = prm->value[q];
        auto f = [&](double v) {
          prm->value[q] = v;
          return loss();
        };
        const double num = five_point(f, orig, 1e-5);
        prm->value[q] = orig;
        EXPECT_NEAR(analytic[q], num, 1e-5 * (1 + std::abs(num))) << to_string(kind) << " " << prm->name << " " << q;
        ++checked;
      }
    }
    EXPECT_GT(checked, 50u);
  }
}

TEST(Loss, KnownValuesAndClipping) {
  WeightedBce bce;
  Batch half(1, 2, 0.5);
  std::vector<double> one_zero{1.0, 0.0};
  EXPECT_NEAR(bce.loss(half, std::vector<double>{1.0, 1.0}) / 2, 1.039720770839918, 1e-12);
  EXPECT_NEAR(bce.loss(half, std::vector<double>{0.0, 0.0}) / 2, 0.34657359027997264, 1e-12);
  EXPECT_NEAR(bce.loss(half, one_zero), 1.5 * std::log(2.0) + 0.5 * std::log(2.0), 1e-12);
  // averaged over rows, summed over nodes
  Batch two(2, 2, 0.5);
  std::vector<double> labels{1.0, 0.0, 1.0, 0.0};
  EXPECT_NEAR(bce.loss(two, labels), bce.loss(half, one_zero), 1e-15);
  Batch extreme(1, 2);
  extreme.data = {0.0, 1.0};
  EXPECT_NEAR(bce.loss(extreme, one_zero), 1.5 * -std::log(1e-7) + 0.5 * -std::log(1e-7), 1e-9);
  Batch grad;
  bce.gradient(extreme, one_zero, grad);
  EXPECT_EQ(grad.data, (std::vector<double>{0.0, 0.0}));
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  WeightedBce bce;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Batch y(3, 4);
  for (auto& v : y.data) v = u(rng);
  std::vector<double> p(12);
  for (auto& v : p) v = rng() % 2;
  Batch grad;
  bce.gradient(y, p, grad);
  for (std::size_t q = 0; q < 12; ++q) {
    const double orig = y.data[q];
    auto f = [&](double v) {
      y.data[q] = v;
      return bce.loss(y, p);
    };
    EXPECT_NEAR(grad.data[q], five_point(f, orig, 1e-6), 1e-7);
    y.data[q] = orig;
  }
}

TEST(Network, ParameterCounts) {
  auto g2 = GridGraph::build(SparseGrid::build({2, IndexRule::sum, 6}, Box::from_bounds(-1, 1, 2)));
  auto g4 = GridGraph::build(SparseGrid::build({4, IndexRule::sum, 8}, Box::from_bounds(-1, 1, 4)));
  ModelConfig mlp;
  mlp.kind = ModelKind::mlp;
  ModelConfig ginn;
  auto m = build_archetype(mlp, g2);
  auto a = build_archetype(ginn, g2);
  auto b = build_archetype(ginn, g4);
  EXPECT_EQ(m->blocks(), 5);
  EXPECT_EQ(b->blocks(), 6);
  EXPECT_EQ(m->trainable_count(), 52910u);
  EXPECT_EQ(a->trainable_count(), 173880u);
  EXPECT_EQ(b->trainable_count(), 1263540u);
  EXPECT_EQ(m->trainable_count_without_bn(), 51480u);
  EXPECT_EQ(a->trainable_count_without_bn(), 173550u);
  EXPECT_EQ(b->trainable_count_without_bn(), 1263150u);
}

TEST(Network, PredictIsRowwise) {
  auto graph = GridGraph::build(small_grid());
  const std::size_t n = graph.size();
  ModelConfig cfg;
  cfg.features = 4;
  cfg.seed = 8;
  Network net(cfg, graph.adjacency(), 1);
  std::mt19937_64 rng(9);
  Batch x = random_batch(7, n, rng);
  auto all = net.predict(x, 3);
  for (std::size_t r = 0; r < 7; ++r) {
    Batch one(1, n);
    std::copy(x.row(r), x.row(r) + n, one.row(0));
    auto single = net.predict(one);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(single.data[i], all.row(r)[i], 1e-15);
      EXPECT_GE(all.row(r)[i], 0.0);
      EXPECT_LE(all.row(r)[i], 1.0);
    }
  }
  // permuted and duplicated rows give permuted and duplicated outputs
  Batch perm(3, n);
  for (std::size_t r : {0u, 1u, 2u}) {
    const std::size_t src = r == 2 ? 4 : 4 - r * 2;
    std::copy(x.row(src), x.row(src) + n, perm.row(r));
  }
  auto out = net.predict(perm);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(out.row(0)[i], out.row(2)[i]);
    EXPECT_NEAR(out.row(1)[i], all.row(2)[i], 1e-15);
  }
  Batch wrong(1, n + 1);
  EXPECT_THROW(net.predict(wrong), Error);
}

TEST(Optimizer, AdamFirstStepAndZeroRate) {
  Param p("w", 2);
  p.value = {1.0, -1.0};
  p.grad = {0.3, -2.0};
  Adam adam(0.9, 0.999, 1e-7);
  adam.step({&p}, 0.01);
  // first step: lr * g / (|g| + eps / sqrt(1 - beta2))
  const double damp = 1e-7 / std::sqrt(1 - 0.999);
  EXPECT_NEAR(p.value[0], 1.0 - 0.01 * 0.3 / (0.3 + damp), 1e-15);
  EXPECT_NEAR(p.value[1], -1.0 + 0.01 * 2.0 / (2.0 + damp), 1e-15);
  Param q("w", 1);
  q.value = {0.5};
  q.grad = {1.0};
  Adam frozen(0.9, 0.999, 1e-7);
  for (int k = 0; k < 5; ++k) frozen.step({&q}, 0.0);
  EXPECT_EQ(q.value[0], 0.5);
}

TEST(Optimizer, PlateauReducesAfterPatience) {
  PlateauScheduler s(0.75, 7, 1e-4);
  double lr = 1e-3;
  for (int epoch = 1; epoch <= 8; ++epoch) lr = s.update(0.5, lr);
  EXPECT_DOUBLE_EQ(lr, 0.00075);
  PlateauScheduler t(0.75, 7, 1e-4);
  lr = 1e-3;
  double loss = 1.0;
  for (int epoch = 1; epoch <= 8; ++epoch) lr = t.update(epoch == 1 ? loss : loss - 5e-5, lr);  // below min_delta
  EXPECT_DOUBLE_EQ(lr, 0.00075);
  PlateauScheduler u(0.75, 7, 1e-4);
  lr = 1e-3;
  loss = 1.0;
  for (int epoch = 1; epoch <= 20; ++epoch) lr = u.update(loss -= 1e-3, lr);
  EXPECT_DOUBLE_EQ(lr, 1e-3);
}

namespace {

DatasetSplit toy_split(const GridGraph& graph, const SparseGrid& ref, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fns = sample_functions(2, 4, rng);
  DatasetConfig cfg;
  cfg.t = 10;
  cfg.threads = 1;
  auto d = generate_dataset(ref, graph, fns, cfg);
  return split_dataset(d, rng);
}

}  // namespace

TEST(Training, ZeroLearningRateKeepsWeights) {
  auto ref = small_grid();
  auto graph = GridGraph::build(ref);
  auto split = toy_split(graph, ref, 10);
  ModelConfig mc;
  mc.features = 3;
  Network net(mc, graph.adjacency(), 1);
  std::vector<std::vector<double>> before;
  for (Param* p : net.params()) before.push_back(p->value);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.max_epochs = 3;
  train(net, split, tc);
  auto after = net.params();
  for (std::size_t k = 0; k < after.size(); ++k) EXPECT_EQ(after[k]->value, before[k]);
}

TEST(Training, LossDecreasesAndBestIsRestored) {
  auto ref = small_grid();
  auto graph = GridGraph::build(ref);
  auto split = toy_split(graph, ref, 11);
  ModelConfig mc;
  mc.features = 4;
  mc.seed = 3;
  Network net(mc, graph.adjacency(), 1);
  TrainConfig tc;
  tc.max_epochs = 30;
  tc.batch_size = 16;
  tc.seed = 1;
  auto hist = train(net, split, tc);
  ASSERT_FALSE(hist.epochs.empty());
  EXPECT_LT(hist.epochs.back().train_loss, hist.epochs.front().train_loss);
  EXPECT_EQ(evaluate_model(net, split.validation, tc).loss, hist.best_val_loss);
  // structural zeros of the effective operator survive training
  for (Layer* l : net.layers())
    if (auto* gi = dynamic_cast<GraphInstructed*>(l)) {
      const auto m = gi->effective_matrix();
      const auto& a = gi->operator_matrix();
      const std::size_t n = gi->nodes(), k = gi->in_features(), f = gi->out_features();
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i)
          if (a.at(j, i) == 0.0)
            for (std::size_t a_k = 0; a_k < k; ++a_k)
              for (std::size_t c = 0; c < f; ++c) EXPECT_EQ(m[(j * k + a_k) * n * f + i * f + c], 0.0);
    }
}

TEST(Training, RejectsMismatchedData) {
  auto ref = small_grid();
  auto graph = GridGraph::build(ref);
  auto split = toy_split(graph, ref, 12);
  auto other = GridGraph::build(SparseGrid::build({2, IndexRule::sum, 5}, Box::from_bounds(-1, 1, 2)));
  ModelConfig mc;
  mc.features = 2;
  Network net(mc, other.adjacency(), 0);
  try {
    train(net, split, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension_mismatch);
  }
}
