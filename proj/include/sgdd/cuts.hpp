#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgdd/error.hpp"
#include "sgdd/sparse_grid.hpp"

namespace sgdd {

using json = nlohmann::json;

/// Legendre polynomial P_deg(u) by the three-term recurrence.
inline double legendre(int deg, double u) {
  if (deg == 0) return 1.0;
  double p0 = 1.0, p1 = u;
  for (int k = 1; k < deg; ++k) {
    const double p2 = ((2.0 * k + 1.0) * u * p1 - k * p0) / (k + 1.0);
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

/// sum_h c_h prod_i P_{h_i}((x_i + 1) / 2).
class LegendrePolynomial {
 public:
  LegendrePolynomial() = default;
  LegendrePolynomial(int dim, std::vector<MultiIndex> degrees, std::vector<double> coeffs)
      : dim_(dim), degrees_(std::move(degrees)), coeffs_(std::move(coeffs)) {
    if (degrees_.size() != coeffs_.size())
      fail(ErrorKind::invalid_argument, "Legendre expansion: degree and coefficient counts differ");
    for (const auto& h : degrees_) {
      if (static_cast<int>(h.size()) != dim_) fail(ErrorKind::dimension_mismatch, "Legendre multi-index has wrong length");
      for (int v : h) max_degree_ = std::max(max_degree_, v);
    }
  }

  int dim() const { return dim_; }
  const std::vector<MultiIndex>& degrees() const { return degrees_; }
  const std::vector<double>& coefficients() const { return coeffs_; }

  double operator()(std::span<const double> x) const {
    const auto stride = static_cast<std::size_t>(max_degree_ + 1);
    thread_local std::vector<double> table;
    table.assign(static_cast<std::size_t>(dim_) * stride, 0.0);
    for (int a = 0; a < dim_; ++a) {
      const double u = 0.5 * (x[static_cast<std::size_t>(a)] + 1.0);
      double* row = table.data() + static_cast<std::size_t>(a) * stride;
      row[0] = 1.0;
      if (max_degree_ >= 1) row[1] = u;
      for (int k = 1; k < max_degree_; ++k)
        row[k + 1] = ((2.0 * k + 1.0) * u * row[k] - k * row[k - 1]) / (k + 1.0);
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < degrees_.size(); ++t) {
      double term = coeffs_[t];
      for (int a = 0; a < dim_; ++a)
        term *= table[static_cast<std::size_t>(a) * stride + static_cast<std::size_t>(degrees_[t][static_cast<std::size_t>(a)])];
      sum += term;
    }
    return sum;
  }

  json to_json() const { return json{{"dim", dim_}, {"degrees", degrees_}, {"coefficients", coeffs_}}; }
  static LegendrePolynomial from_json(const json& j) {
    return LegendrePolynomial(j.at("dim").get<int>(), j.at("degrees").get<std::vector<MultiIndex>>(),
                              j.at("coefficients").get<std::vector<double>>());
  }

 private:
  int dim_ = 0;
  std::vector<MultiIndex> degrees_;
  std::vector<double> coeffs_;
  int max_degree_ = 0;
};

/// Coefficient law for random Legendre expansions: N(0, variance).
struct CoefficientLaw {
  double variance = 10.0;
  int total_degree = 4;  // index set I_sum(total_degree)
};

/// Random expansion over I_sum(4) with i.i.d. N(0, variance) coefficients.
template <class Rng>
LegendrePolynomial sample_legendre_piece(int dim, Rng& rng, const CoefficientLaw& law = {}) {
  if (dim < 1) fail(ErrorKind::invalid_argument, "Legendre piece needs dim >= 1");
  auto indices = multi_index_set(IndexRule::sum, law.total_degree, dim);
  std::normal_distribution<double> normal(0.0, std::sqrt(law.variance));
  std::vector<double> coeffs;
  coeffs.reserve(indices.size());
  for (std::size_t t = 0; t < indices.size(); ++t) coeffs.push_back(normal(rng));
  return LegendrePolynomial(dim, std::move(indices), std::move(coeffs));
}

// ---------------------------------------------------------------------------
// Cut functions: continuous f whose zero-level set contains the discontinuities.

class CutFunction {
 public:
  virtual ~CutFunction() = default;
  virtual int dim() const = 0;
  virtual std::string kind() const = 0;
  virtual double operator()(std::span<const double> x) const = 0;

  /// Parameters t in [0,1] (sorted) where f(a + t (b - a)) = 0, when a
  /// closed form exists.
  virtual std::optional<std::vector<double>> segment_roots(std::span<const double> /*a*/,
                                                           std::span<const double> /*b*/) const {
    return std::nullopt;
  }

  /// Euclidean distance from x to the zero-level set, when known analytically.
  virtual std::optional<double> distance(std::span<const double> /*x*/) const { return std::nullopt; }

  /// out[tau] = f(a + (tau/t)(b - a)) for tau = 0..t, with the endpoints
  /// evaluated at a and b themselves.
  virtual void sample_segment(std::span<const double> a, std::span<const double> b, int t, std::span<double> out) const {
    sample_with([this](std::span<const double> x) { return (*this)(x); }, a, b, t, out);
  }

  virtual json to_json() const = 0;

 protected:
  template <class F>
  static void sample_with(F&& f, std::span<const double> a, std::span<const double> b, int t, std::span<double> out) {
    const std::size_t n = a.size();
    double buf[16];
    std::vector<double> big;
    double* x = buf;
    if (n > 16) {
      big.resize(n);
      x = big.data();
    }
    std::span<const double> xs(x, n);
    out[0] = f(a);
    for (int tau = 1; tau < t; ++tau) {
      const double s = static_cast<double>(tau) / static_cast<double>(t);
      for (std::size_t c = 0; c < n; ++c) x[c] = a[c] + s * (b[c] - a[c]);
      out[static_cast<std::size_t>(tau)] = f(xs);
    }
    out[static_cast<std::size_t>(t)] = f(b);
  }
};

using CutPtr = std::shared_ptr<const CutFunction>;

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void check_dim(std::span<const double> x, int dim, const char* who) {
  if (static_cast<int>(x.size()) != dim)
    fail(ErrorKind::dimension_mismatch, std::string(who) + ": expected a point of dimension " + std::to_string(dim));
}

}  // namespace detail

/// eta(x) = x . w / |w| + b
class LinearCut final : public CutFunction {
 public:
  LinearCut(std::vector<double> w, double b) : raw_(w), normal_(std::move(w)), offset_(b) {
    double norm = std::sqrt(detail::dot(normal_, normal_));
    if (!(norm > 0)) fail(ErrorKind::invalid_argument, "linear cut needs a nonzero normal");
    for (auto& v : normal_) v /= norm;
  }

  int dim() const override { return static_cast<int>(normal_.size()); }
  std::string kind() const override { return "linear"; }
  double operator()(std::span<const double> x) const override { return detail::dot(x, normal_) + offset_; }

  std::optional<std::vector<double>> segment_roots(std::span<const double> a, std::span<const double> b) const override {
    const double fa = (*this)(a), fb = (*this)(b);
    if (fa == 0.0 && fb == 0.0) return std::vector<double>{0.0, 1.0};
    if (fa == 0.0) return std::vector<double>{0.0};
    if (fb == 0.0) return std::vector<double>{1.0};
    if ((fa > 0) == (fb > 0)) return std::vector<double>{};
    return std::vector<double>{fa / (fa - fb)};
  }

  std::optional<double> distance(std::span<const double> x) const override { return std::abs((*this)(x)); }

  void sample_segment(std::span<const double> a, std::span<const double> b, int t, std::span<double> out) const override {
    sample_with([this](std::span<const double> x) { return detail::dot(x, normal_) + offset_; }, a, b, t, out);
  }

  const std::vector<double>& unit_normal() const { return normal_; }
  double offset() const { return offset_; }

  json to_json() const override { return json{{"kind", kind()}, {"w", raw_}, {"b", offset_}}; }

 private:
  std::vector<double> raw_;
  std::vector<double> normal_;
  double offset_;
};

/// sigma(x) = |x - c| - r
class SphericalCut final : public CutFunction {
 public:
  SphericalCut(std::vector<double> c, double r) : center_(std::move(c)), radius_(r) {
    if (!(radius_ > 0)) fail(ErrorKind::invalid_argument, "spherical cut needs a positive radius");
  }

  int dim() const override { return static_cast<int>(center_.size()); }
  std::string kind() const override { return "spherical"; }
  double operator()(std::span<const double> x) const override { return eval(x); }

  void sample_segment(std::span<const double> a, std::span<const double> b, int t, std::span<double> out) const override {
    sample_with([this](std::span<const double> x) { return eval(x); }, a, b, t, out);
  }

  std::optional<std::vector<double>> segment_roots(std::span<const double> a, std::span<const double> b) const override {
    // |a - c + t d|^2 = r^2
    double qa = 0.0, qb = 0.0, qc = -radius_ * radius_;
    for (std::size_t i = 0; i < center_.size(); ++i) {
      const double d = b[i] - a[i], e = a[i] - center_[i];
      qa += d * d;
      qb += 2.0 * d * e;
      qc += e * e;
    }
    std::vector<double> roots;
    if (qa == 0.0) {
      if ((*this)(a) == 0.0) roots.push_back(0.0);
      return roots;
    }
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0) return roots;
    const double sq = std::sqrt(disc);
    // numerically stable pair
    const double q = -0.5 * (qb + std::copysign(sq, qb));
    double t1 = q / qa;
    double t2 = q != 0.0 ? qc / q : t1;
    if (t1 > t2) std::swap(t1, t2);
    for (double t : {t1, t2})
      if (t >= 0.0 && t <= 1.0 && (roots.empty() || roots.back() != t)) roots.push_back(t);
    return roots;
  }

  std::optional<double> distance(std::span<const double> x) const override { return std::abs((*this)(x)); }

  const std::vector<double>& center() const { return center_; }
  double radius() const { return radius_; }

  json to_json() const override { return json{{"kind", kind()}, {"c", center_}, {"r", radius_}}; }

 private:
  double eval(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < center_.size(); ++i) s += (x[i] - center_[i]) * (x[i] - center_[i]);
    return std::sqrt(s) - radius_;
  }

  std::vector<double> center_;
  double radius_;
};

/// pi(x) = C Pi(xi) / max|Pi| - x_iota, xi = x without coordinate iota.
class PolynomialCut final : public CutFunction {
 public:
  PolynomialCut(int dim, int axis, double scale, LegendrePolynomial poly, double max_abs)
      : dim_(dim), axis_(axis), scale_(scale), poly_(std::move(poly)), max_abs_(max_abs) {
    if (dim_ < 2) fail(ErrorKind::invalid_argument, "polynomial cut needs dim >= 2");
    if (axis_ < 0 || axis_ >= dim_) fail(ErrorKind::invalid_argument, "polynomial cut axis out of range");
    if (poly_.dim() != dim_ - 1) fail(ErrorKind::dimension_mismatch, "polynomial cut expansion must have dim - 1 variables");
    if (!(max_abs_ > 0)) fail(ErrorKind::invalid_argument, "polynomial cut needs max|Pi| > 0");
  }

  int dim() const override { return dim_; }
  std::string kind() const override { return "polynomial"; }
  double operator()(std::span<const double> x) const override {
    double xi[16];
    std::vector<double> big;
    double* rest = xi;
    if (dim_ - 1 > 16) {
      big.resize(static_cast<std::size_t>(dim_ - 1));
      rest = big.data();
    }
    for (int a = 0, r = 0; a < dim_; ++a)
      if (a != axis_) rest[r++] = x[static_cast<std::size_t>(a)];
    return scale_ * poly_(std::span<const double>(rest, static_cast<std::size_t>(dim_ - 1))) / max_abs_ -
           x[static_cast<std::size_t>(axis_)];
  }

  int axis() const { return axis_; }
  double scale() const { return scale_; }
  double max_abs() const { return max_abs_; }
  const LegendrePolynomial& polynomial() const { return poly_; }

  json to_json() const override {
    return json{{"kind", kind()}, {"dim", dim_}, {"axis", axis_}, {"C", scale_}, {"poly", poly_.to_json()}, {"max_abs", max_abs_}};
  }

 private:
  int dim_;
  int axis_;
  double scale_;
  LegendrePolynomial poly_;
  double max_abs_;
};

/// theta(x) = (|x4| - sqrt(x1^2 + x2^2))^2 + x3^2 - (|x4|/4)^2 on R^4.
class TorusCut final : public CutFunction {
 public:
  int dim() const override { return 4; }
  std::string kind() const override { return "torus"; }
  double operator()(std::span<const double> x) const override {
    const double a = std::abs(x[3]) - std::sqrt(x[0] * x[0] + x[1] * x[1]);
    const double q = std::abs(x[3]) / 4.0;
    return a * a + x[2] * x[2] - q * q;
  }
  json to_json() const override { return json{{"kind", kind()}}; }
};

/// x2 - A sin(k pi x1) in 2D.
class SineCut final : public CutFunction {
 public:
  SineCut(double amplitude, double frequency) : amplitude_(amplitude), frequency_(frequency) {}
  int dim() const override { return 2; }
  std::string kind() const override { return "sine"; }
  double operator()(std::span<const double> x) const override {
    return x[1] - amplitude_ * std::sin(frequency_ * std::numbers::pi * x[0]);
  }
  json to_json() const override { return json{{"kind", kind()}, {"A", amplitude_}, {"k", frequency_}}; }

 private:
  double amplitude_, frequency_;
};

/// Product of one ellipse and two parabolic "bow" curves in 2D; the zero set
/// is the union of the three curves.
class EllipseBowsCut final : public CutFunction {
 public:
  struct Ellipse {
    double cx, cy, ax, ay;
  };
  struct Bow {  // x2 = y0 + curvature * (x1 - x0)^2
    double x0, y0, curvature;
  };

  EllipseBowsCut(Ellipse e, Bow b1, Bow b2) : ellipse_(e), bow1_(b1), bow2_(b2) {}

  int dim() const override { return 2; }
  std::string kind() const override { return "ellipse-bows"; }
  double operator()(std::span<const double> x) const override {
    const double u = (x[0] - ellipse_.cx) / ellipse_.ax, v = (x[1] - ellipse_.cy) / ellipse_.ay;
    const double e = u * u + v * v - 1.0;
    auto bow = [&](const Bow& b) { return x[1] - b.y0 - b.curvature * (x[0] - b.x0) * (x[0] - b.x0); };
    return e * bow(bow1_) * bow(bow2_);
  }
  json to_json() const override {
    return json{{"kind", kind()},
                {"ellipse", {ellipse_.cx, ellipse_.cy, ellipse_.ax, ellipse_.ay}},
                {"bow1", {bow1_.x0, bow1_.y0, bow1_.curvature}},
                {"bow2", {bow2_.x0, bow2_.y0, bow2_.curvature}}};
  }

 private:
  Ellipse ellipse_;
  Bow bow1_, bow2_;
};

/// User-supplied scalar field, optionally with a per-segment root finder.
class FunctionCut final : public CutFunction {
 public:
  using Field = std::function<double(std::span<const double>)>;
  using RootFinder = std::function<std::vector<double>(std::span<const double>, std::span<const double>)>;

  FunctionCut(int dim, std::string name, Field field, RootFinder roots = {})
      : dim_(dim), name_(std::move(name)), field_(std::move(field)), roots_(std::move(roots)) {}

  int dim() const override { return dim_; }
  std::string kind() const override { return "user:" + name_; }
  double operator()(std::span<const double> x) const override { return field_(x); }
  std::optional<std::vector<double>> segment_roots(std::span<const double> a, std::span<const double> b) const override {
    if (!roots_) return std::nullopt;
    auto r = roots_(a, b);
    std::sort(r.begin(), r.end());
    return r;
  }
  json to_json() const override { return json{{"kind", "user"}, {"name", name_}, {"dim", dim_}}; }

 private:
  int dim_;
  std::string name_;
  Field field_;
  RootFinder roots_;
};

inline CutPtr cut_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "linear") return std::make_shared<LinearCut>(j.at("w").get<std::vector<double>>(), j.at("b").get<double>());
  if (kind == "spherical") return std::make_shared<SphericalCut>(j.at("c").get<std::vector<double>>(), j.at("r").get<double>());
  if (kind == "polynomial")
    return std::make_shared<PolynomialCut>(j.at("dim").get<int>(), j.at("axis").get<int>(), j.at("C").get<double>(),
                                           LegendrePolynomial::from_json(j.at("poly")), j.at("max_abs").get<double>());
  if (kind == "torus") return std::make_shared<TorusCut>();
  if (kind == "sine") return std::make_shared<SineCut>(j.at("A").get<double>(), j.at("k").get<double>());
  if (kind == "ellipse-bows") {
    auto e = j.at("ellipse").get<std::vector<double>>();
    auto b1 = j.at("bow1").get<std::vector<double>>();
    auto b2 = j.at("bow2").get<std::vector<double>>();
    return std::make_shared<EllipseBowsCut>(EllipseBowsCut::Ellipse{e[0], e[1], e[2], e[3]},
                                            EllipseBowsCut::Bow{b1[0], b1[1], b1[2]},
                                            EllipseBowsCut::Bow{b2[0], b2[1], b2[2]});
  }
  fail(ErrorKind::unsupported_cut, "cannot rebuild cut of kind '" + kind + "' from a document");
}

// ---------------------------------------------------------------------------
// Random cut families used for synthetic training data.

enum class CutKind { linear, spherical, polynomial };

inline std::string to_string(CutKind k) {
  switch (k) {
    case CutKind::linear: return "linear";
    case CutKind::spherical: return "spherical";
    case CutKind::polynomial: return "polynomial";
  }
  return "?";
}

struct CutSamplingOptions {
  CoefficientLaw law;
  /// r = min{0.2, rho} when true, max{0.2, rho} otherwise.
  bool radius_min_rule = true;
  std::size_t max_abs_samples = 100000;
};

/// max |Pi| over [-1,1]^m, estimated from uniform samples plus the 3^m
/// tensor of {-1, 0, 1}.
template <class Rng>
double estimate_max_abs(const LegendrePolynomial& poly, Rng& rng, std::size_t samples) {
  const int m = poly.dim();
  std::vector<double> y(static_cast<std::size_t>(m));
  double best = 0.0;
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (std::size_t s = 0; s < samples; ++s) {
    for (auto& v : y) v = unif(rng);
    best = std::max(best, std::abs(poly(y)));
  }
  std::size_t total = 1;
  for (int a = 0; a < m; ++a) total *= 3;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (int a = 0; a < m; ++a) {
      y[static_cast<std::size_t>(a)] = static_cast<double>(c % 3) - 1.0;
      c /= 3;
    }
    best = std::max(best, std::abs(poly(y)));
  }
  return best;
}

template <class Rng>
CutPtr sample_cut(CutKind kind, int dim, Rng& rng, const CutSamplingOptions& opt = {}) {
  switch (kind) {
    case CutKind::linear: {
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_real_distribution<double> unif(-1.0, 1.0);
      std::vector<double> w(static_cast<std::size_t>(dim));
      for (auto& v : w) v = normal(rng);
      const double b = unif(rng);
      return std::make_shared<LinearCut>(std::move(w), b);
    }
    case CutKind::spherical: {
      std::uniform_real_distribution<double> unif(-1.0, 1.0);
      std::vector<double> c(static_cast<std::size_t>(dim));
      for (auto& v : c) v = unif(rng);
      std::uniform_real_distribution<double> rho_law(0.0, std::sqrt(static_cast<double>(dim)));
      const double rho = rho_law(rng);
      const double r = opt.radius_min_rule ? std::min(0.2, rho) : std::max(0.2, rho);
      return std::make_shared<SphericalCut>(std::move(c), r);
    }
    case CutKind::polynomial: {
      if (dim < 2) fail(ErrorKind::invalid_argument, "polynomial cut needs dim >= 2");
      std::uniform_real_distribution<double> scale_law(0.75, 1.15);
      const double scale = scale_law(rng);
      std::uniform_int_distribution<int> axis_law(0, dim - 1);
      const int axis = axis_law(rng);
      auto poly = sample_legendre_piece(dim - 1, rng, opt.law);
      const double max_abs = estimate_max_abs(poly, rng, opt.max_abs_samples);
      return std::make_shared<PolynomialCut>(dim, axis, scale, std::move(poly), max_abs);
    }
  }
  fail(ErrorKind::invalid_argument, "unknown cut kind");
}

/// g(x) = g1(x) if f(x) >= 0, g2(x) otherwise.
struct PiecewiseFunction {
  LegendrePolynomial g1;
  LegendrePolynomial g2;
  CutPtr cut;

  int dim() const { return cut->dim(); }
  double operator()(std::span<const double> x) const { return (*cut)(x) >= 0.0 ? g1(x) : g2(x); }

  json to_json() const { return json{{"g1", g1.to_json()}, {"g2", g2.to_json()}, {"cut", cut->to_json()}}; }
  static PiecewiseFunction from_json(const json& j) {
    return PiecewiseFunction{LegendrePolynomial::from_json(j.at("g1")), LegendrePolynomial::from_json(j.at("g2")),
                             cut_from_json(j.at("cut"))};
  }
};

template <class Rng>
PiecewiseFunction sample_piecewise_function(CutKind kind, int dim, Rng& rng, const CutSamplingOptions& opt = {}) {
  auto g1 = sample_legendre_piece(dim, rng, opt.law);
  auto g2 = sample_legendre_piece(dim, rng, opt.law);
  auto cut = sample_cut(kind, dim, rng, opt);
  return PiecewiseFunction{std::move(g1), std::move(g2), std::move(cut)};
}

}  // namespace sgdd
