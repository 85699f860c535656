#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sgdd/error.hpp"
#include "sgdd/network.hpp"
#include "sgdd/nn_layers.hpp"
#include "sgdd/synth_data.hpp"

namespace sgdd::nn {

struct TrainConfig {
  double mu0 = 0.5;
  double mu1 = 1.5;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-7;
  double plateau_factor = 0.75;
  int plateau_patience = 7;
  double plateau_min_delta = 1e-4;
  int early_stop_patience = 35;
  bool restore_best = true;
  int max_epochs = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(mu0 > 0) || !(mu1 > 0)) fail(ErrorKind::config, "loss weights must be positive");
    if (plateau_patience < 1 || early_stop_patience < 1) fail(ErrorKind::config, "patience values must be >= 1");
    if (batch_size == 0) fail(ErrorKind::config, "batch size must be >= 1");
    if (max_epochs < 0) fail(ErrorKind::config, "max_epochs must be >= 0");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

/// Keras-style Adam with bias correction folded into the step size.
class Adam {
 public:
  Adam(double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<Param*>& params, double lr) {
    if (m_.empty()) {
      for (Param* p : params) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
      }
    }
    ++t_;
    const double alpha = lr * std::sqrt(1.0 - std::pow(b2_, t_)) / (1.0 - std::pow(b1_, t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Param& p = *params[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t q = 0; q < p.size(); ++q) {
        const double g = p.grad[q];
        m[q] = b1_ * m[q] + (1.0 - b1_) * g;
        v[q] = b2_ * v[q] + (1.0 - b2_) * g * g;
        p.value[q] -= alpha * m[q] / (std::sqrt(v[q]) + eps_);
      }
    }
  }

 private:
  double b1_, b2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Multiplies the rate by `factor` after `patience` epochs without an
/// improvement larger than `min_delta`.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor, int patience, double min_delta)
      : factor_(factor), patience_(patience), min_delta_(min_delta) {}

  double update(double monitored, double lr) {
    if (monitored < best_ - min_delta_) {
      best_ = monitored;
      wait_ = 0;
      return lr;
    }
    if (++wait_ >= patience_) {
      wait_ = 0;
      return lr * factor_;
    }
    return lr;
  }

 private:
  double factor_;
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int wait_ = 0;
};

/// Model inputs: gamma per row, sentinels to 0.
inline Batch prepare_inputs(const Dataset& d) {
  Batch x(d.rows(), d.n);
  for (std::size_t r = 0; r < d.rows(); ++r) preprocess_gamma(d.row_values(r), std::span<double>(x.row(r), d.n));
  return x;
}

inline std::vector<double> label_vector(const Dataset& d) { return {d.labels.begin(), d.labels.end()}; }

struct Metrics {
  double loss = 0.0;
  double mae = 0.0;
};

inline Metrics evaluate_model(Network& net, const Dataset& d, const TrainConfig& cfg) {
  if (d.rows() == 0) fail(ErrorKind::degenerate_dataset, "cannot evaluate on an empty set");
  const Batch x = prepare_inputs(d);
  const Batch y = net.predict(x);
  const auto p = label_vector(d);
  WeightedBce bce{cfg.mu0, cfg.mu1};
  Metrics m;
  m.loss = bce.loss(y, p);
  double abs = 0.0;
  for (std::size_t q = 0; q < p.size(); ++q) abs += std::abs(y.data[q] - p[q]);
  m.mae = abs / static_cast<double>(p.size());
  return m;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

inline TrainHistory train(Network& net, const DatasetSplit& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.train.rows() == 0) fail(ErrorKind::degenerate_dataset, "training set is empty");
  if (data.train.n != net.nodes())
    fail(ErrorKind::dimension_mismatch, "dataset width " + std::to_string(data.train.n) + " does not match model size " +
                                            std::to_string(net.nodes()));
  const bool has_val = data.validation.rows() > 0;
  const Batch x_all = prepare_inputs(data.train);
  const auto p_all = label_vector(data.train);
  const std::size_t n = net.nodes();
  WeightedBce bce{cfg.mu0, cfg.mu1};
  Adam adam(cfg.beta1, cfg.beta2, cfg.adam_epsilon);
  PlateauScheduler plateau(cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_min_delta);
  std::mt19937_64 rng(cfg.seed);
  auto params = net.params();
  auto state = net.state();

  std::vector<std::vector<double>> best_params, best_state;
  auto snapshot = [&] {
    best_params.clear();
    best_state.clear();
    for (Param* p : params) best_params.push_back(p->value);
    for (Param* p : state) best_state.push_back(p->value);
  };
  snapshot();

  TrainHistory hist;
  double lr = cfg.learning_rate;
  int wait = 0;
  std::vector<std::size_t> order(data.train.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Batch xb, yb, gb, dx;
  std::vector<double> pb;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t rows = std::min(cfg.batch_size, order.size() - start);
      xb.resize(rows, n);
      pb.resize(rows * n);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t src = order[start + r];
        std::copy(x_all.row(src), x_all.row(src) + n, xb.row(r));
        std::copy(p_all.begin() + static_cast<long>(src * n), p_all.begin() + static_cast<long>((src + 1) * n),
                  pb.begin() + static_cast<long>(r * n));
      }
      net.zero_grad();
      net.forward(xb, yb, true);
      const double loss = bce.loss(yb, pb);
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << epoch << ", batch " << batches << " (lr " << lr << ")";
        fail(ErrorKind::non_finite_loss, os.str());
      }
      bce.gradient(yb, pb, gb);
      net.backward(gb, dx);
      adam.step(params, lr);
      loss_sum += loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val_loss = has_val ? evaluate_model(net, data.validation, cfg).loss : rec.train_loss;
    rec.learning_rate = lr;
    if (!std::isfinite(rec.val_loss)) fail(ErrorKind::non_finite_loss, "non-finite validation loss at epoch " + std::to_string(epoch));
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < hist.best_val_loss) {
      hist.best_val_loss = rec.val_loss;
      hist.best_epoch = epoch;
      wait = 0;
      snapshot();
    } else if (++wait >= cfg.early_stop_patience) {
      hist.stopped_early = true;
      break;
    }
    lr = plateau.update(rec.val_loss, lr);
  }

  if (cfg.restore_best && hist.best_epoch > 0) {
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best_params[k];
    for (std::size_t k = 0; k < state.size(); ++k) state[k]->value = best_state[k];
  }
  return hist;
}

}  // namespace sgdd::nn
