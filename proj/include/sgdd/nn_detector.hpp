#pragma once

#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "sgdd/detectors.hpp"
#include "sgdd/error.hpp"
#include "sgdd/network.hpp"
#include "sgdd/synth_data.hpp"

namespace sgdd {

/// Evaluation-only detector backed by a trained network.
class NnDetector final : public Detector {
 public:
  NnDetector(std::shared_ptr<nn::Network> net, std::string label = "nn")
      : net_(std::move(net)), label_(std::move(label)) {
    if (!net_) fail(ErrorKind::invalid_argument, "network detector needs a model");
  }

  std::string name() const override { return label_; }
  bool deterministic() const override { return false; }
  std::size_t size() const { return net_->nodes(); }

  std::vector<double> detect(const SparseGrid&, const GridGraph&, std::span<const double> values) const override {
    std::vector<double> out(values.size());
    predict(values, out);
    return out;
  }

  void detect_batch(std::span<const SparseGrid>, const GridGraph&, std::span<const double> values,
                    std::span<double> out) const override {
    predict(values, out);
  }

  /// Rows of raw evaluations (sentinels allowed) to rows of p.
  void predict(std::span<const double> values, std::span<double> out) const {
    const std::size_t n = net_->nodes();
    if (values.size() % n != 0 || out.size() != values.size())
      fail(ErrorKind::dimension_mismatch, "network detector expects rows of " + std::to_string(n) + " values");
    const std::size_t rows = values.size() / n;
    std::vector<std::size_t> live;
    for (std::size_t r = 0; r < rows; ++r) {
      bool any = false;
      for (std::size_t i = 0; i < n && !any; ++i) any = !is_sentinel(values[r * n + i]);
      if (any) live.push_back(r);
    }
    std::fill(out.begin(), out.end(), 0.0);
    if (live.empty()) return;
    nn::Batch x(live.size(), n);
    for (std::size_t k = 0; k < live.size(); ++k)
      preprocess_gamma(values.subspan(live[k] * n, n), std::span<double>(x.row(k), n));
    nn::Batch y;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      y = net_->predict(x);
    }
    for (std::size_t k = 0; k < live.size(); ++k)
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t q = live[k] * n + i;
        out[q] = is_sentinel(values[q]) ? 0.0 : y.row(k)[i];
      }
  }

 private:
  std::shared_ptr<nn::Network> net_;
  std::string label_;
  mutable std::mutex mutex_;
};

}  // namespace sgdd
