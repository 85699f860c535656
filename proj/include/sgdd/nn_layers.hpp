#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgdd/error.hpp"
#include "sgdd/grid_graph.hpp"

namespace sgdd::nn {

/// rows x width, row-major.
struct Batch {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Batch() = default;
  Batch(std::size_t r, std::size_t w, double fill = 0.0) : rows(r), width(w), data(r * w, fill) {}

  double* row(std::size_t r) { return data.data() + r * width; }
  const double* row(std::size_t r) const { return data.data() + r * width; }
  void resize(std::size_t r, std::size_t w) {
    rows = r;
    width = w;
    data.assign(r * w, 0.0);
  }
};

struct Param {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string n, std::size_t size) : name(std::move(n)), value(size, 0.0), grad(size, 0.0) {}
  std::size_t size() const { return value.size(); }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string type() const = 0;
  virtual std::size_t in_width() const = 0;
  virtual std::size_t out_width() const = 0;
  virtual void forward(const Batch& x, Batch& y, bool training) = 0;
  /// Accumulates parameter gradients; writes dx.
  virtual void backward(const Batch& dy, Batch& dx) = 0;
  virtual std::vector<Param*> params() { return {}; }
  /// Non-trainable state (batch-norm running statistics).
  virtual std::vector<Param*> state() { return {}; }
};

using LayerPtr = std::unique_ptr<Layer>;

namespace detail {

/// Glorot normal truncated at two standard deviations.
template <class Rng>
void glorot_truncated(std::vector<double>& w, double fan_in, double fan_out, Rng& rng) {
  const double stddev = std::sqrt(2.0 / (fan_in + fan_out)) / 0.87962566103423978;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : w) {
    double z;
    do z = normal(rng);
    while (std::abs(z) > 2.0);
    v = z * stddev;
  }
}

inline void check_width(const Batch& x, std::size_t w, const char* who) {
  if (x.width != w)
    fail(ErrorKind::dimension_mismatch, std::string(who) + ": input width " + std::to_string(x.width) + " != " +
                                            std::to_string(w));
}

}  // namespace detail

/// y = x W + b
class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out) : in_(in), out_(out), w_("kernel", in * out), b_("bias", out) {}

  template <class Rng>
  void initialize(Rng& rng) {
    detail::glorot_truncated(w_.value, static_cast<double>(in_), static_cast<double>(out_), rng);
    std::fill(b_.value.begin(), b_.value.end(), 0.0);
  }

  std::string type() const override { return "dense"; }
  std::size_t in_width() const override { return in_; }
  std::size_t out_width() const override { return out_; }

  void forward(const Batch& x, Batch& y, bool) override {
    detail::check_width(x, in_, "dense");
    x_ = x;
    y.resize(x.rows, out_);
    for (std::size_t r = 0; r < x.rows; ++r) {
      double* yr = y.row(r);
      std::copy(b_.value.begin(), b_.value.end(), yr);
      const double* xr = x.row(r);
      for (std::size_t i = 0; i < in_; ++i) {
        const double xv = xr[i];
        if (xv == 0.0) continue;
        const double* wi = w_.value.data() + i * out_;
        for (std::size_t o = 0; o < out_; ++o) yr[o] += xv * wi[o];
      }
    }
  }

  void backward(const Batch& dy, Batch& dx) override {
    dx.resize(dy.rows, in_);
    for (std::size_t r = 0; r < dy.rows; ++r) {
      const double* g = dy.row(r);
      const double* xr = x_.row(r);
      double* dxr = dx.row(r);
      for (std::size_t o = 0; o < out_; ++o) b_.grad[o] += g[o];
      for (std::size_t i = 0; i < in_; ++i) {
        double* gw = w_.grad.data() + i * out_;
        const double* wi = w_.value.data() + i * out_;
        const double xv = xr[i];
        double acc = 0.0;
        for (std::size_t o = 0; o < out_; ++o) {
          gw[o] += xv * g[o];
          acc += wi[o] * g[o];
        }
        dxr[i] = acc;
      }
    }
  }

  std::vector<Param*> params() override { return {&w_, &b_}; }

 private:
  std::size_t in_, out_;
  Param w_, b_;
  Batch x_;
};

/// Graph-instructed layer on a fixed graph with self-loops:
///   y[i,f] = sum_{j in N(i) + i} A^[j,i] sum_k x[j,k] w[j,k,f] + b[i,f]
/// with A^ = A + I. Weights live on source nodes, messages are scaled by A^.
class GraphInstructed final : public Layer {
 public:
  GraphInstructed(const SparseMatrix& adjacency, std::size_t k, std::size_t f)
      : n_(adjacency.n), k_(k), f_(f), w_("kernel", adjacency.n * k * f), b_("bias", adjacency.n * f) {
    // A^ = A + I in CSR (symmetric, so rows double as columns)
    a_.n = n_;
    a_.row_ptr.push_back(0);
    for (std::size_t r = 0; r < n_; ++r) {
      bool diag_done = false;
      for (std::size_t p = adjacency.row_ptr[r]; p < adjacency.row_ptr[r + 1]; ++p) {
        const auto c = adjacency.cols[p];
        if (!diag_done && c > r) {
          a_.cols.push_back(r);
          a_.values.push_back(1.0);
          diag_done = true;
        }
        if (c == r) fail(ErrorKind::invalid_argument, "adjacency must have a zero diagonal");
        a_.cols.push_back(c);
        a_.values.push_back(adjacency.values[p]);
      }
      if (!diag_done) {
        a_.cols.push_back(r);
        a_.values.push_back(1.0);
      }
      a_.row_ptr.push_back(a_.cols.size());
    }
  }

  /// Fans scale by the mean number of nonzeros per column of A^.
  template <class Rng>
  void initialize(Rng& rng) {
    const double d = static_cast<double>(a_.nonzeros()) / static_cast<double>(n_);
    detail::glorot_truncated(w_.value, static_cast<double>(k_) * d, static_cast<double>(f_) * d, rng);
    std::fill(b_.value.begin(), b_.value.end(), 0.0);
  }

  std::string type() const override { return "graph-instructed"; }
  std::size_t in_width() const override { return n_ * k_; }
  std::size_t out_width() const override { return n_ * f_; }
  std::size_t nodes() const { return n_; }
  std::size_t in_features() const { return k_; }
  std::size_t out_features() const { return f_; }
  const SparseMatrix& operator_matrix() const { return a_; }

  void forward(const Batch& x, Batch& y, bool) override {
    detail::check_width(x, n_ * k_, "graph-instructed");
    x_ = x;
    y.resize(x.rows, n_ * f_);
    std::vector<double> z(n_ * f_);
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double* xr = x.row(r);
      std::fill(z.begin(), z.end(), 0.0);
      for (std::size_t j = 0; j < n_; ++j) {
        double* zj = z.data() + j * f_;
        for (std::size_t k = 0; k < k_; ++k) {
          const double xv = xr[j * k_ + k];
          if (xv == 0.0) continue;
          const double* w = w_.value.data() + (j * k_ + k) * f_;
          for (std::size_t f = 0; f < f_; ++f) zj[f] += xv * w[f];
        }
      }
      double* yr = y.row(r);
      std::copy(b_.value.begin(), b_.value.end(), yr);
      for (std::size_t i = 0; i < n_; ++i) {
        double* yi = yr + i * f_;
        for (std::size_t p = a_.row_ptr[i]; p < a_.row_ptr[i + 1]; ++p) {
          const double a = a_.values[p];
          const double* zj = z.data() + a_.cols[p] * f_;
          for (std::size_t f = 0; f < f_; ++f) yi[f] += a * zj[f];
        }
      }
    }
  }

  void backward(const Batch& dy, Batch& dx) override {
    dx.resize(dy.rows, n_ * k_);
    std::vector<double> dz(n_ * f_);
    for (std::size_t r = 0; r < dy.rows; ++r) {
      const double* g = dy.row(r);
      for (std::size_t q = 0; q < n_ * f_; ++q) b_.grad[q] += g[q];
      std::fill(dz.begin(), dz.end(), 0.0);
      for (std::size_t j = 0; j < n_; ++j) {
        double* dzj = dz.data() + j * f_;
        for (std::size_t p = a_.row_ptr[j]; p < a_.row_ptr[j + 1]; ++p) {
          const double a = a_.values[p];
          const double* gi = g + a_.cols[p] * f_;
          for (std::size_t f = 0; f < f_; ++f) dzj[f] += a * gi[f];
        }
      }
      const double* xr = x_.row(r);
      double* dxr = dx.row(r);
      for (std::size_t j = 0; j < n_; ++j) {
        const double* dzj = dz.data() + j * f_;
        for (std::size_t k = 0; k < k_; ++k) {
          const double xv = xr[j * k_ + k];
          const std::size_t base = (j * k_ + k) * f_;
          const double* w = w_.value.data() + base;
          double* gw = w_.grad.data() + base;
          double acc = 0.0;
          for (std::size_t f = 0; f < f_; ++f) {
            gw[f] += xv * dzj[f];
            acc += w[f] * dzj[f];
          }
          dxr[j * k_ + k] = acc;
        }
      }
    }
  }

  std::vector<Param*> params() override { return {&w_, &b_}; }

  /// Dense (N*K) x (N*F) matrix equal to this layer's linear map.
  std::vector<double> effective_matrix() const {
    std::vector<double> m(n_ * k_ * n_ * f_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t p = a_.row_ptr[i]; p < a_.row_ptr[i + 1]; ++p) {
        const auto j = a_.cols[p];
        for (std::size_t k = 0; k < k_; ++k)
          for (std::size_t f = 0; f < f_; ++f)
            m[(j * k_ + k) * n_ * f_ + i * f_ + f] = a_.values[p] * w_.value[(j * k_ + k) * f_ + f];
      }
    return m;
  }

 private:
  std::size_t n_, k_, f_;
  SparseMatrix a_;
  Param w_, b_;
  Batch x_;
};

class LeakyRelu final : public Layer {
 public:
  LeakyRelu(std::size_t width, double slope) : width_(width), slope_(slope) {}
  std::string type() const override { return "leaky-relu"; }
  std::size_t in_width() const override { return width_; }
  std::size_t out_width() const override { return width_; }

  void forward(const Batch& x, Batch& y, bool) override {
    detail::check_width(x, width_, "leaky-relu");
    x_ = x;
    y.resize(x.rows, width_);
    for (std::size_t q = 0; q < x.data.size(); ++q) y.data[q] = x.data[q] > 0 ? x.data[q] : slope_ * x.data[q];
  }
  void backward(const Batch& dy, Batch& dx) override {
    dx.resize(dy.rows, width_);
    for (std::size_t q = 0; q < dy.data.size(); ++q) dx.data[q] = x_.data[q] > 0 ? dy.data[q] : slope_ * dy.data[q];
  }
  const Batch& last_input() const { return x_; }

 private:
  std::size_t width_;
  double slope_;
  Batch x_;
};

class Sigmoid final : public Layer {
 public:
  explicit Sigmoid(std::size_t width) : width_(width) {}
  std::string type() const override { return "sigmoid"; }
  std::size_t in_width() const override { return width_; }
  std::size_t out_width() const override { return width_; }

  void forward(const Batch& x, Batch& y, bool) override {
    detail::check_width(x, width_, "sigmoid");
    y.resize(x.rows, width_);
    for (std::size_t q = 0; q < x.data.size(); ++q) y.data[q] = 1.0 / (1.0 + std::exp(-x.data[q]));
    y_ = y;
  }
  void backward(const Batch& dy, Batch& dx) override {
    dx.resize(dy.rows, width_);
    for (std::size_t q = 0; q < dy.data.size(); ++q) dx.data[q] = dy.data[q] * y_.data[q] * (1.0 - y_.data[q]);
  }

 private:
  std::size_t width_;
  Batch y_;
};

/// Mean over the F features of each node.
class FeatureMean final : public Layer {
 public:
  FeatureMean(std::size_t nodes, std::size_t features) : n_(nodes), f_(features) {}
  std::string type() const override { return "feature-mean"; }
  std::size_t in_width() const override { return n_ * f_; }
  std::size_t out_width() const override { return n_; }

  void forward(const Batch& x, Batch& y, bool) override {
    detail::check_width(x, n_ * f_, "feature-mean");
    y.resize(x.rows, n_);
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t i = 0; i < n_; ++i) {
        double s = 0.0;
        for (std::size_t f = 0; f < f_; ++f) s += x.row(r)[i * f_ + f];
        y.row(r)[i] = s / static_cast<double>(f_);
      }
  }
  void backward(const Batch& dy, Batch& dx) override {
    dx.resize(dy.rows, n_ * f_);
    const double inv = 1.0 / static_cast<double>(f_);
    for (std::size_t r = 0; r < dy.rows; ++r)
      for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t f = 0; f < f_; ++f) dx.row(r)[i * f_ + f] = dy.row(r)[i] * inv;
  }

 private:
  std::size_t n_, f_;
};

/// Per-channel normalization of rows viewed as S x C. Statistics pool over
/// the batch and the S axis.
class BatchNorm final : public Layer {
 public:
  BatchNorm(std::size_t s, std::size_t c, double momentum = 0.99, double eps = 1e-3)
      : s_(s), c_(c), momentum_(momentum), eps_(eps), gamma_("gamma", c), beta_("beta", c),
        mean_("moving_mean", c), var_("moving_variance", c) {
    std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0);
    std::fill(var_.value.begin(), var_.value.end(), 1.0);
  }

  std::string type() const override { return "batch-norm"; }
  std::size_t in_width() const override { return s_ * c_; }
  std::size_t out_width() const override { return s_ * c_; }

  void forward(const Batch& x, Batch& y, bool training) override {
    detail::check_width(x, s_ * c_, "batch-norm");
    y.resize(x.rows, s_ * c_);
    training_ = training;
    if (training) {
      const double count = static_cast<double>(x.rows * s_);
      std::vector<double> mu(c_, 0.0), var(c_, 0.0);
      for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t s = 0; s < s_; ++s)
          for (std::size_t c = 0; c < c_; ++c) mu[c] += x.row(r)[s * c_ + c];
      for (auto& m : mu) m /= count;
      for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t s = 0; s < s_; ++s)
          for (std::size_t c = 0; c < c_; ++c) {
            const double d = x.row(r)[s * c_ + c] - mu[c];
            var[c] += d * d;
          }
      for (auto& v : var) v /= count;
      inv_std_.resize(c_);
      for (std::size_t c = 0; c < c_; ++c) {
        inv_std_[c] = 1.0 / std::sqrt(var[c] + eps_);
        mean_.value[c] = momentum_ * mean_.value[c] + (1.0 - momentum_) * mu[c];
        var_.value[c] = momentum_ * var_.value[c] + (1.0 - momentum_) * var[c];
      }
      xhat_.resize(x.rows, s_ * c_);
      for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t s = 0; s < s_; ++s)
          for (std::size_t c = 0; c < c_; ++c) {
            const std::size_t q = s * c_ + c;
            const double h = (x.row(r)[q] - mu[c]) * inv_std_[c];
            xhat_.row(r)[q] = h;
            y.row(r)[q] = gamma_.value[c] * h + beta_.value[c];
          }
    } else {
      inv_std_.resize(c_);
      for (std::size_t c = 0; c < c_; ++c) inv_std_[c] = 1.0 / std::sqrt(var_.value[c] + eps_);
      xhat_.resize(x.rows, s_ * c_);
      for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t s = 0; s < s_; ++s)
          for (std::size_t c = 0; c < c_; ++c) {
            const std::size_t q = s * c_ + c;
            const double h = (x.row(r)[q] - mean_.value[c]) * inv_std_[c];
            xhat_.row(r)[q] = h;
            y.row(r)[q] = gamma_.value[c] * h + beta_.value[c];
          }
    }
  }

  void backward(const Batch& dy, Batch& dx) override {
    dx.resize(dy.rows, s_ * c_);
    if (!training_) {
      for (std::size_t r = 0; r < dy.rows; ++r)
        for (std::size_t s = 0; s < s_; ++s)
          for (std::size_t c = 0; c < c_; ++c) {
            const std::size_t q = s * c_ + c;
            dx.row(r)[q] = dy.row(r)[q] * gamma_.value[c] * inv_std_[c];
            beta_.grad[c] += dy.row(r)[q];
            gamma_.grad[c] += dy.row(r)[q] * xhat_.row(r)[q];
          }
      return;
    }
    const double count = static_cast<double>(dy.rows * s_);
    std::vector<double> sum_g(c_, 0.0), sum_gh(c_, 0.0);
    for (std::size_t r = 0; r < dy.rows; ++r)
      for (std::size_t s = 0; s < s_; ++s)
        for (std::size_t c = 0; c < c_; ++c) {
          const std::size_t q = s * c_ + c;
          sum_g[c] += dy.row(r)[q];
          sum_gh[c] += dy.row(r)[q] * xhat_.row(r)[q];
        }
    for (std::size_t c = 0; c < c_; ++c) {
      beta_.grad[c] += sum_g[c];
      gamma_.grad[c] += sum_gh[c];
    }
    for (std::size_t r = 0; r < dy.rows; ++r)
      for (std::size_t s = 0; s < s_; ++s)
        for (std::size_t c = 0; c < c_; ++c) {
          const std::size_t q = s * c_ + c;
          dx.row(r)[q] = gamma_.value[c] * inv_std_[c] *
                         (dy.row(r)[q] - sum_g[c] / count - xhat_.row(r)[q] * sum_gh[c] / count);
        }
  }

  std::vector<Param*> params() override { return {&gamma_, &beta_}; }
  std::vector<Param*> state() override { return {&mean_, &var_}; }

 private:
  std::size_t s_, c_;
  double momentum_, eps_;
  Param gamma_, beta_, mean_, var_;
  Batch xhat_;
  std::vector<double> inv_std_;
  bool training_ = false;
};

/// Weighted binary cross-entropy, summed over nodes and averaged over rows.
struct WeightedBce {
  double mu0 = 0.5;
  double mu1 = 1.5;
  static constexpr double clip = 1e-7;

  double loss(const Batch& p_hat, std::span<const double> p) const {
    double total = 0.0;
    for (std::size_t q = 0; q < p_hat.data.size(); ++q) {
      const double y = std::clamp(p_hat.data[q], clip, 1.0 - clip);
      total += -mu1 * p[q] * std::log(y) - mu0 * (1.0 - p[q]) * std::log(1.0 - y);
    }
    return total / static_cast<double>(p_hat.rows);
  }

  /// d loss / d p_hat; zero where clipping is active.
  void gradient(const Batch& p_hat, std::span<const double> p, Batch& grad) const {
    grad.resize(p_hat.rows, p_hat.width);
    const double inv_rows = 1.0 / static_cast<double>(p_hat.rows);
    for (std::size_t q = 0; q < p_hat.data.size(); ++q) {
      const double y = p_hat.data[q];
      if (y < clip || y > 1.0 - clip) {
        grad.data[q] = 0.0;
        continue;
      }
      grad.data[q] = (-mu1 * p[q] / y + mu0 * (1.0 - p[q]) / (1.0 - y)) * inv_rows;
    }
  }
};

}  // namespace sgdd::nn
