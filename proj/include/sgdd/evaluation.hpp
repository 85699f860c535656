#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sgdd/cuts.hpp"
#include "sgdd/engine.hpp"
#include "sgdd/error.hpp"
#include "sgdd/grid_graph.hpp"
#include "sgdd/sparse_grid.hpp"

namespace sgdd {

struct TestFunction {
  std::string name;
  std::string description;
  Box domain;
  PiecewiseFunction g;

  int dim() const { return domain.dim(); }
  const CutFunction& cut() const { return *g.cut; }
  Function function() const {
    auto copy = g;
    return [copy](std::span<const double> x) { return copy(x); };
  }
};

namespace detail {

inline PiecewiseFunction with_fixed_pieces(int dim, CutPtr cut, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto g1 = sample_legendre_piece(dim, rng);
  auto g2 = sample_legendre_piece(dim, rng);
  return PiecewiseFunction{std::move(g1), std::move(g2), std::move(cut)};
}

}  // namespace detail

inline std::vector<std::string> builtin_test_names() { return {"circle", "polynomial", "sine", "ellipse-bows", "torus4d"}; }

/// Registered targets: circle, polynomial, sine and ellipse-bows on [-1,1]^2,
/// torus4d on [-1,1]^4.
inline TestFunction builtin_test_function(const std::string& name) {
  const Box square = Box::from_bounds(-1.0, 1.0, 2);
  if (name == "circle") {
    auto cut = std::make_shared<SphericalCut>(std::vector<double>{0.2, 0.1}, 0.6);
    return {"circle", "circular cut |x - (0.2, 0.1)| = 0.6, Legendre pieces", square,
            detail::with_fixed_pieces(2, cut, 101)};
  }
  if (name == "polynomial") {
    std::mt19937_64 rng(202);
    auto cut = sample_cut(CutKind::polynomial, 2, rng);
    return {"polynomial", "Legendre polynomial cut, fixed seed, Legendre pieces", square,
            detail::with_fixed_pieces(2, cut, 102)};
  }
  if (name == "sine") {
    auto cut = std::make_shared<SineCut>(0.5, 1.0);
    return {"sine", "sinusoidal cut x2 = 0.5 sin(pi x1), Legendre pieces", square,
            detail::with_fixed_pieces(2, cut, 103)};
  }
  if (name == "ellipse-bows") {
    auto cut = std::make_shared<EllipseBowsCut>(EllipseBowsCut::Ellipse{-0.35, 0.35, 0.4, 0.25},
                                                EllipseBowsCut::Bow{0.3, -0.2, 0.9},
                                                EllipseBowsCut::Bow{0.0, -0.7, 0.6});
    return {"ellipse-bows", "one elliptic cut and two parabolic bows, Legendre pieces", square,
            detail::with_fixed_pieces(2, cut, 104)};
  }
  if (name == "torus4d") {
    return {"torus4d", "torus cut with size depending on x4, Legendre pieces", Box::from_bounds(-1.0, 1.0, 4),
            detail::with_fixed_pieces(4, std::make_shared<TorusCut>(), 105)};
  }
  fail(ErrorKind::config, "unknown test function '" + name + "'");
}

// ---------------------------------------------------------------------------

struct TprOptions {
  std::optional<GridSpec> check_spec;  // default: the detector's reference spec
  int sign_samples = 1000;             // per edge when no closed form exists
};

struct TprReport {
  bool defined = false;
  double tpr = 0.0;
  std::size_t troubled_count = 0;
  std::size_t true_count = 0;
  std::size_t visited_count = 0;
  std::vector<bool> verdicts;
  int sign_samples = 0;
};

/// True when the cut's zero set meets the segment [a, b].
inline bool segment_meets_zero_set(const CutFunction& cut, std::span<const double> a, std::span<const double> b,
                                   int samples, std::vector<double>& buf) {
  if (auto roots = cut.segment_roots(a, b)) return !roots->empty();
  buf.resize(static_cast<std::size_t>(samples) + 1);
  cut.sample_segment(a, b, samples, buf);
  const int s0 = detail::sign(buf[0]);
  if (s0 == 0) return true;
  for (double v : buf)
    if (detail::sign(v) != s0) return true;
  return false;
}

/// A troubled point counts as true when an edge of a check grid of edge
/// Lambda_min centred on it meets the zero set of the cut.
inline TprReport true_positive_rate(const std::vector<TroubledPoint>& troubled, const CutFunction& cut,
                                    double lambda_min, const GridSpec& reference_spec, const TprOptions& opt = {},
                                    std::size_t visited = 0) {
  const GridSpec spec = opt.check_spec.value_or(reference_spec);
  const auto base = SparseGrid::build(spec, Box::from_bounds(-1.0, 1.0, spec.dim));
  const auto graph = GridGraph::build(base);
  TprReport rep;
  rep.troubled_count = troubled.size();
  rep.visited_count = visited;
  rep.sign_samples = opt.sign_samples;
  std::vector<double> buf;
  for (const auto& tp : troubled) {
    const auto check = base.similar(tp.x, lambda_min);
    bool hit = false;
    for (const auto& e : graph.edges()) {
      if (segment_meets_zero_set(cut, check.point(e.i), check.point(e.j), opt.sign_samples, buf)) {
        hit = true;
        break;
      }
    }
    rep.verdicts.push_back(hit);
    rep.true_count += hit ? 1 : 0;
  }
  rep.defined = !troubled.empty();
  rep.tpr = rep.defined ? static_cast<double>(rep.true_count) / static_cast<double>(rep.troubled_count) : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Grayscale images.

struct GrayImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pixels;  // row-major, values in [0,1]

  double at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
};

/// Ten-ellipse head phantom (MATLAB "Shepp-Logan" intensities).
inline GrayImage shepp_logan(std::size_t r) {
  if (r < 16) fail(ErrorKind::invalid_argument, "phantom resolution must be >= 16");
  struct Ellipse {
    double a, ax, ay, x0, y0, phi;
  };
  static constexpr std::array<Ellipse, 10> table{{
      {1.00, .69, .92, 0, 0, 0},
      {-.98, .6624, .874, 0, -.0184, 0},
      {-.02, .11, .31, .22, 0, -18},
      {-.02, .16, .41, -.22, 0, 18},
      {.01, .21, .25, 0, .35, 0},
      {.01, .046, .046, 0, .1, 0},
      {.01, .046, .046, 0, -.1, 0},
      {.01, .046, .023, -.08, -.605, 0},
      {.01, .023, .023, 0, -.605, 0},
      {.01, .023, .046, .06, -.605, 0},
  }};
  GrayImage img;
  img.rows = img.cols = r;
  img.pixels.assign(r * r, 0.0);
  const double rd = static_cast<double>(r);
  for (std::size_t row = 0; row < r; ++row) {
    const double v = 1.0 - (2.0 * static_cast<double>(row) + 1.0) / rd;
    for (std::size_t col = 0; col < r; ++col) {
      const double u = (2.0 * static_cast<double>(col) + 1.0) / rd - 1.0;
      double sum = 0.0;
      for (const auto& e : table) {
        const double th = e.phi * std::numbers::pi / 180.0;
        const double dx = u - e.x0, dy = v - e.y0;
        const double xr = dx * std::cos(th) + dy * std::sin(th);
        const double yr = -dx * std::sin(th) + dy * std::cos(th);
        if ((xr * xr) / (e.ax * e.ax) + (yr * yr) / (e.ay * e.ay) <= 1.0) sum += e.a;
      }
      img.pixels[row * r + col] = std::clamp(sum, 0.0, 1.0);
    }
  }
  return img;
}

/// Plain (P2) or raw (P5) graymap, scaled to [0,1].
inline GrayImage read_pgm(std::istream& in) {
  auto token = [&in]() {
    std::string t;
    while (in >> t) {
      if (t[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return t;
    }
    fail(ErrorKind::io, "truncated graymap header");
  };
  const std::string magic = token();
  if (magic != "P2" && magic != "P5") fail(ErrorKind::io, "not a graymap (expected P2 or P5)");
  GrayImage img;
  img.cols = std::stoul(token());
  img.rows = std::stoul(token());
  const unsigned long maxval = std::stoul(token());
  if (img.cols == 0 || img.rows == 0 || maxval == 0 || maxval > 65535) fail(ErrorKind::io, "bad graymap header");
  img.pixels.resize(img.rows * img.cols);
  if (magic == "P2") {
    for (auto& p : img.pixels) p = static_cast<double>(std::stoul(token())) / static_cast<double>(maxval);
  } else {
    in.get();  // single whitespace after maxval
    const int bytes = maxval < 256 ? 1 : 2;
    for (auto& p : img.pixels) {
      unsigned v = 0;
      for (int b = 0; b < bytes; ++b) {
        const int ch = in.get();
        if (ch == EOF) fail(ErrorKind::io, "truncated graymap data");
        v = (v << 8) | static_cast<unsigned>(ch);
      }
      p = static_cast<double>(v) / static_cast<double>(maxval);
    }
  }
  return img;
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path);
  return read_pgm(in);
}

inline void write_pgm(const GrayImage& img, std::ostream& out) {
  out << "P5\n" << img.cols << " " << img.rows << "\n255\n";
  for (double p : img.pixels) out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0))));
}

/// g(x) = M[round(x1)][round(x2)] inside the pixel range, 0 outside.
inline Function image_function(std::shared_ptr<const GrayImage> img) {
  return [img](std::span<const double> x) {
    const double r = std::round(x[0]), c = std::round(x[1]);
    if (r < 0 || c < 0 || r > static_cast<double>(img->rows) - 1 || c > static_cast<double>(img->cols) - 1) return 0.0;
    return img->at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
}

/// Square domain covering every pixel: [-0.5, max(rows, cols) - 0.5]^2.
inline Box image_domain(const GrayImage& img) {
  return Box::from_bounds(-0.5, static_cast<double>(std::max(img.rows, img.cols)) - 0.5, 2);
}

}  // namespace sgdd
