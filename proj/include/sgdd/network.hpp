#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sgdd/error.hpp"
#include "sgdd/grid_graph.hpp"
#include "sgdd/nn_layers.hpp"

namespace sgdd::nn {

enum class ModelKind { ginn, mlp };

inline std::string to_string(ModelKind k) { return k == ModelKind::ginn ? "ginn" : "mlp"; }
inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "ginn") return ModelKind::ginn;
  if (s == "mlp") return ModelKind::mlp;
  fail(ErrorKind::config, "unknown model kind '" + s + "' (expected ginn or mlp)");
}

struct ModelConfig {
  ModelKind kind = ModelKind::ginn;
  std::size_t features = 15;
  double slope = 0.3;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;
  std::uint64_t seed = 0;
  /// -1: floor(diameter / 2)
  int residual_blocks = -1;
};

/// Input -> L1 -> BN, then residual blocks
///   u = BN(psi(L'(z))), s = psi(L''(u) + s), z = BN(s)
/// with s initialised to psi(L1(x)), then a sigmoid output layer; the GINN
/// averages its F sigmoid outputs per node.
class Network {
 public:
  Network(const ModelConfig& cfg, const SparseMatrix& adjacency, int blocks) : cfg_(cfg), n_(adjacency.n) {
    if (blocks < 0) fail(ErrorKind::invalid_argument, "residual block count must be >= 0");
    if (cfg.kind == ModelKind::ginn && cfg.features == 0) fail(ErrorKind::config, "GINN needs at least one feature");
    cfg_.residual_blocks = blocks;
    std::mt19937_64 rng(cfg.seed);
    const std::size_t f = cfg.kind == ModelKind::ginn ? cfg.features : 1;
    const std::size_t width = n_ * f;
    // batch-norm axis: features for the GINN, units for the MLP
    const std::size_t bn_s = cfg.kind == ModelKind::ginn ? n_ : 1;
    const std::size_t bn_c = cfg.kind == ModelKind::ginn ? f : n_;

    auto hidden = [&](std::size_t in_features) -> LayerPtr {
      if (cfg.kind == ModelKind::ginn) {
        auto l = std::make_unique<GraphInstructed>(adjacency, in_features, f);
        l->initialize(rng);
        return l;
      }
      auto l = std::make_unique<Dense>(n_, n_);
      l->initialize(rng);
      return l;
    };
    auto bn = [&] { return std::make_unique<BatchNorm>(bn_s, bn_c, cfg.bn_momentum, cfg.bn_epsilon); };
    auto act = [&] { return std::make_unique<LeakyRelu>(width, cfg.slope); };

    first_ = hidden(1);
    first_act_ = act();
    first_bn_ = bn();
    for (int b = 0; b < blocks; ++b) {
      Block blk;
      blk.inner = hidden(f);
      blk.inner_act = act();
      blk.inner_bn = bn();
      blk.outer = hidden(f);
      blk.sum_act = act();
      blk.sum_bn = bn();
      blocks_.push_back(std::move(blk));
    }
    final_ = hidden(f);
    sigmoid_ = std::make_unique<Sigmoid>(width);
    if (cfg.kind == ModelKind::ginn) pool_ = std::make_unique<FeatureMean>(n_, f);
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t nodes() const { return n_; }
  int blocks() const { return static_cast<int>(blocks_.size()); }

  /// Every layer in a fixed order (used for parameter I/O).
  std::vector<Layer*> layers() {
    std::vector<Layer*> out{first_.get(), first_act_.get(), first_bn_.get()};
    for (auto& b : blocks_)
      for (Layer* l : {b.inner.get(), b.inner_act.get(), b.inner_bn.get(), b.outer.get(), b.sum_act.get(), b.sum_bn.get()})
        out.push_back(l);
    out.push_back(final_.get());
    out.push_back(sigmoid_.get());
    if (pool_) out.push_back(pool_.get());
    return out;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (Layer* l : layers())
      for (Param* p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<Param*> state() {
    std::vector<Param*> out;
    for (Layer* l : layers())
      for (Param* p : l->state()) out.push_back(p);
    return out;
  }

  std::size_t trainable_count() {
    std::size_t c = 0;
    for (Param* p : params()) c += p->size();
    return c;
  }

  /// Trainable count without batch-norm gamma/beta.
  std::size_t trainable_count_without_bn() {
    std::size_t c = 0;
    for (Layer* l : layers())
      if (l->type() != "batch-norm")
        for (Param* p : l->params()) c += p->size();
    return c;
  }

  /// x: rows x N (already preprocessed); returns rows x N in [0,1].
  void forward(const Batch& x, Batch& y, bool training) {
    if (x.width != n_) fail(ErrorKind::dimension_mismatch, "model expects " + std::to_string(n_) + " inputs per row");
    Batch h, a, z;
    first_->forward(x, h, training);
    first_act_->forward(h, s_, training);
    first_bn_->forward(s_, z, training);
    for (auto& b : blocks_) {
      b.inner->forward(z, h, training);
      b.inner_act->forward(h, a, training);
      b.inner_bn->forward(a, h, training);
      b.outer->forward(h, a, training);
      for (std::size_t q = 0; q < a.data.size(); ++q) a.data[q] += s_.data[q];
      b.sum_act->forward(a, s_, training);
      b.sum_bn->forward(s_, z, training);
    }
    final_->forward(z, h, training);
    if (pool_) {
      sigmoid_->forward(h, a, training);
      pool_->forward(a, y, training);
    } else {
      sigmoid_->forward(h, y, training);
    }
  }

  /// Backward pass for the last forward; returns d loss / d x.
  void backward(const Batch& dy, Batch& dx) {
    Batch g, t, dz, ds;
    if (pool_) {
      pool_->backward(dy, t);
      sigmoid_->backward(t, g);
    } else {
      sigmoid_->backward(dy, g);
    }
    final_->backward(g, dz);
    ds.resize(dz.rows, dz.width);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
      it->sum_bn->backward(dz, t);
      for (std::size_t q = 0; q < t.data.size(); ++q) t.data[q] += ds.data[q];
      it->sum_act->backward(t, ds);  // d pre-sum; flows to both v and s_prev
      it->outer->backward(ds, g);
      it->inner_bn->backward(g, t);
      it->inner_act->backward(t, g);
      it->inner->backward(g, dz);
    }
    first_bn_->backward(dz, t);
    for (std::size_t q = 0; q < t.data.size(); ++q) t.data[q] += ds.data[q];
    first_act_->backward(t, g);
    first_->backward(g, dx);
  }

  void zero_grad() {
    for (Param* p : params()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  }

  /// Inference in row blocks.
  Batch predict(const Batch& x, std::size_t chunk = 256) {
    Batch out(x.rows, n_);
    Batch part, y;
    for (std::size_t r0 = 0; r0 < x.rows; r0 += chunk) {
      const std::size_t r1 = std::min(x.rows, r0 + chunk);
      part.rows = r1 - r0;
      part.width = x.width;
      part.data.assign(x.data.begin() + static_cast<long>(r0 * x.width), x.data.begin() + static_cast<long>(r1 * x.width));
      forward(part, y, false);
      std::copy(y.data.begin(), y.data.end(), out.data.begin() + static_cast<long>(r0 * n_));
    }
    return out;
  }

 private:
  struct Block {
    LayerPtr inner, inner_act, inner_bn, outer, sum_act, sum_bn;
  };

  ModelConfig cfg_;
  std::size_t n_;
  LayerPtr first_, first_act_, first_bn_;
  std::vector<Block> blocks_;
  LayerPtr final_, sigmoid_, pool_;
  Batch s_;
};

/// Archetype sized by the graph: floor(diameter / 2) residual blocks.
inline std::unique_ptr<Network> build_archetype(const ModelConfig& cfg, const GridGraph& graph) {
  int blocks = cfg.residual_blocks;
  if (blocks < 0) blocks = graph_diameter(graph) / 2;
  return std::make_unique<Network>(cfg, graph.adjacency(), blocks);
}

}  // namespace sgdd::nn
