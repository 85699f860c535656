#pragma once

#include <algorithm>
#include <array>
#include <exception>
#include <optional>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sgdd/cuts.hpp"
#include "sgdd/detectors.hpp"
#include "sgdd/engine.hpp"
#include "sgdd/error.hpp"
#include "sgdd/grid_graph.hpp"
#include "sgdd/sparse_grid.hpp"

namespace sgdd {

/// Abs-max rescaling into [-1,1]; sentinels are left out of the scale and
/// mapped to 0.
inline void preprocess_gamma(std::span<const double> in, std::span<double> out) {
  double scale = 0.0;
  for (double v : in)
    if (!is_sentinel(v)) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < in.size(); ++i)
    out[i] = (is_sentinel(in[i]) || scale == 0.0) ? 0.0 : in[i] / scale;
}

inline std::vector<double> preprocess_gamma(std::span<const double> in) {
  std::vector<double> out(in.size());
  preprocess_gamma(in, out);
  return out;
}

/// Threads for data-parallel loops: DISCDET_THREADS, default 1.
inline unsigned default_thread_count() {
  if (const char* env = std::getenv("DISCDET_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

/// Rows of (raw g', binary p) over a fixed grid of N points.
struct Dataset {
  std::size_t n = 0;
  std::vector<double> values;          // rows x n, raw (pre-gamma)
  std::vector<std::uint8_t> labels;    // rows x n
  std::map<std::string, std::string> header;

  std::size_t rows() const { return n == 0 ? 0 : values.size() / n; }
  std::span<const double> row_values(std::size_t r) const { return {values.data() + r * n, n}; }
  std::span<const std::uint8_t> row_labels(std::size_t r) const { return {labels.data() + r * n, n}; }

  void append(std::span<const double> g, std::span<const double> p) {
    if (g.size() != n || p.size() != n) fail(ErrorKind::dimension_mismatch, "sample length does not match dataset width");
    values.insert(values.end(), g.begin(), g.end());
    for (double v : p) labels.push_back(v >= 0.5 ? 1 : 0);
  }

  void append_row(const Dataset& other, std::size_t r) {
    auto g = other.row_values(r);
    auto p = other.row_labels(r);
    values.insert(values.end(), g.begin(), g.end());
    labels.insert(labels.end(), p.begin(), p.end());
  }

  Dataset empty_like() const {
    Dataset d;
    d.n = n;
    d.header = header;
    return d;
  }

  std::size_t nonzero_labels(std::size_t r) const {
    auto p = row_labels(r);
    return static_cast<std::size_t>(std::count(p.begin(), p.end(), std::uint8_t{1}));
  }
};

struct DatasetConfig {
  int t = 149;                       // Z^(t+1)
  std::optional<double> lambda_min;  // default 2 / 2^(h_max + 1) scaled to the domain
  double tau = 0.5;
  Box domain = Box::from_bounds(-1.0, 1.0, 2);
  BoundaryPolicy boundary = BoundaryPolicy::clip_stop;
  unsigned threads = 0;  // 0: DISCDET_THREADS
};

struct GenerationLog {
  std::size_t functions = 0;
  std::size_t skipped = 0;
  std::vector<std::size_t> samples_per_function;
};

inline double default_lambda_min(const SparseGrid& reference, const Box& domain) {
  return domain.edge / std::ldexp(1.0, reference.max_level() + 1);
}

/// Runs the search with Z^(t+1) on every function and records one sample
/// per processed grid. Functions producing non-finite values are skipped.
inline Dataset generate_dataset(const SparseGrid& reference, const GridGraph& graph,
                                const std::vector<PiecewiseFunction>& functions, const DatasetConfig& cfg,
                                GenerationLog* log = nullptr) {
  const std::size_t q = functions.size();
  std::vector<Dataset> parts(q);
  std::vector<char> skipped(q, 0);
  EngineConfig ec;
  ec.domain = cfg.domain;
  ec.lambda_min = cfg.lambda_min.value_or(default_lambda_min(reference, cfg.domain));
  ec.tau = cfg.tau;
  ec.boundary = cfg.boundary;

  auto work = [&](std::size_t f) {
    parts[f].n = reference.size();
    const auto& fn = functions[f];
    if (fn.dim() != reference.dim()) fail(ErrorKind::dimension_mismatch, "function dimension does not match grid");
    DetectionEngine engine(reference, graph, std::make_shared<ZLevelDetector>(fn.cut, cfg.t), ec);
    bool bad = false;
    engine.set_observer([&](const SparseGrid&, std::span<const double> g, std::span<const double> p) {
      for (double v : g)
        if (!std::isfinite(v) && !is_sentinel(v)) bad = true;
      if (!bad) parts[f].append(g, p);
    });
    engine.run_basic([&fn](std::span<const double> x) { return fn(x); }, engine.root_task());
    if (bad) {
      skipped[f] = 1;
      parts[f].values.clear();
      parts[f].labels.clear();
    }
  };

  unsigned threads = cfg.threads ? cfg.threads : default_thread_count();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(q, 1))));
  if (threads == 1) {
    for (std::size_t f = 0; f < q; ++f) work(f);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t f = w; f < q; f += threads) work(f);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  Dataset out;
  out.n = reference.size();
  if (log) {
    log->functions = q;
    log->skipped = 0;
    log->samples_per_function.clear();
  }
  for (std::size_t f = 0; f < q; ++f) {
    out.values.insert(out.values.end(), parts[f].values.begin(), parts[f].values.end());
    out.labels.insert(out.labels.end(), parts[f].labels.begin(), parts[f].labels.end());
    if (log) {
      log->skipped += skipped[f];
      log->samples_per_function.push_back(parts[f].rows());
    }
  }
  out.header["grid.dim"] = std::to_string(reference.spec().dim);
  out.header["grid.rule"] = to_string(reference.spec().rule);
  out.header["grid.level"] = std::to_string(reference.spec().level);
  out.header["detector"] = "zlevel:" + std::to_string(cfg.t);
  std::ostringstream lm;
  lm.precision(17);
  lm << ec.lambda_min;
  out.header["lambda_min"] = lm.str();
  out.header["functions"] = std::to_string(q);
  return out;
}

/// `per_kind` functions of each cut family, in family order.
template <class Rng>
std::vector<PiecewiseFunction> sample_functions(int dim, std::size_t per_kind, Rng& rng,
                                                const CutSamplingOptions& opt = {}) {
  std::vector<PiecewiseFunction> out;
  out.reserve(3 * per_kind);
  for (CutKind kind : {CutKind::linear, CutKind::spherical, CutKind::polynomial})
    for (std::size_t k = 0; k < per_kind; ++k) out.push_back(sample_piecewise_function(kind, dim, rng, opt));
  return out;
}

/// Keeps every sample with a nonzero label plus D0' = max_i D1^(i) random
/// all-zero samples; original order is preserved.
template <class Rng>
Dataset balance_dataset(const Dataset& in, Rng& rng) {
  std::vector<std::size_t> by_count(in.n + 1, 0);
  std::vector<std::size_t> zero_rows;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const auto c = in.nonzero_labels(r);
    ++by_count[c];
    if (c == 0) zero_rows.push_back(r);
  }
  std::size_t keep_zero = 0;
  for (std::size_t i = 1; i <= in.n; ++i) keep_zero = std::max(keep_zero, by_count[i]);
  if (zero_rows.empty()) return in;
  if (keep_zero == 0) fail(ErrorKind::degenerate_dataset, "every sample is all-zero; nothing to balance against");
  std::shuffle(zero_rows.begin(), zero_rows.end(), rng);
  std::vector<char> keep(in.rows(), 1);
  for (std::size_t k = keep_zero; k < zero_rows.size(); ++k) keep[zero_rows[k]] = 0;
  Dataset out = in.empty_like();
  for (std::size_t r = 0; r < in.rows(); ++r)
    if (keep[r]) out.append_row(in, r);
  return out;
}

struct DatasetSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Split sizes: floor(30%) test, floor(80%) of the rest train, remainder validation.
inline std::array<std::size_t, 3> split_sizes(std::size_t total) {
  const std::size_t test = total * 3 / 10;
  const std::size_t train = (total - test) * 8 / 10;
  return {train, total - test - train, test};
}

template <class Rng>
DatasetSplit split_dataset(const Dataset& in, Rng& rng) {
  if (in.rows() < 10) fail(ErrorKind::degenerate_dataset, "need at least 10 samples to split, got " + std::to_string(in.rows()));
  std::vector<std::size_t> order(in.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const auto [n_train, n_val, n_test] = split_sizes(in.rows());
  DatasetSplit s{in.empty_like(), in.empty_like(), in.empty_like()};
  std::size_t k = 0;
  for (; k < n_test; ++k) s.test.append_row(in, order[k]);
  for (; k < n_test + n_train; ++k) s.train.append_row(in, order[k]);
  for (; k < order.size(); ++k) s.validation.append_row(in, order[k]);
  (void)n_val;
  return s;
}

// ---------------------------------------------------------------------------
// Files: <path> holds the binary rows, <path>.hdr the key=value header.

inline constexpr char dataset_magic[8] = {'S', 'G', 'D', 'D', 'D', 'S', '0', '1'};

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) fail(ErrorKind::io, "cannot write " + path);
  bin.write(dataset_magic, 8);
  const std::uint64_t n = d.n, rows = d.rows();
  bin.write(reinterpret_cast<const char*>(&n), sizeof n);
  bin.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  for (std::size_t r = 0; r < rows; ++r) {
    bin.write(reinterpret_cast<const char*>(d.values.data() + r * n), static_cast<std::streamsize>(n * sizeof(double)));
    bin.write(reinterpret_cast<const char*>(d.labels.data() + r * n), static_cast<std::streamsize>(n));
  }
  if (!bin) fail(ErrorKind::io, "short write on " + path);

  std::ofstream hdr(path + ".hdr");
  if (!hdr) fail(ErrorKind::io, "cannot write " + path + ".hdr");
  hdr << "format=sgdd-dataset\nn=" << n << "\nrows=" << rows << "\n";
  for (const auto& [k, v] : d.header)
    if (k != "n" && k != "rows" && k != "format") hdr << k << "=" << v << "\n";
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream bin(path, std::ios::binary);
  if (!bin) fail(ErrorKind::io, "cannot read " + path);
  char magic[8];
  bin.read(magic, 8);
  if (!bin || std::memcmp(magic, dataset_magic, 8) != 0) fail(ErrorKind::io, path + " is not a dataset file");
  std::uint64_t n = 0, rows = 0;
  bin.read(reinterpret_cast<char*>(&n), sizeof n);
  bin.read(reinterpret_cast<char*>(&rows), sizeof rows);
  if (!bin || n == 0 || n > (1u << 24)) fail(ErrorKind::io, path + ": corrupt dataset header");
  Dataset d;
  d.n = n;
  d.values.resize(n * rows);
  d.labels.resize(n * rows);
  for (std::size_t r = 0; r < rows; ++r) {
    bin.read(reinterpret_cast<char*>(d.values.data() + r * n), static_cast<std::streamsize>(n * sizeof(double)));
    bin.read(reinterpret_cast<char*>(d.labels.data() + r * n), static_cast<std::streamsize>(n));
  }
  if (!bin) fail(ErrorKind::io, path + ": truncated dataset");
  std::ifstream hdr(path + ".hdr");
  std::string line;
  while (hdr && std::getline(hdr, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    d.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  d.header.erase("n");
  d.header.erase("rows");
  d.header.erase("format");
  return d;
}

inline void export_dataset_csv(const Dataset& d, std::ostream& os) {
  for (std::size_t i = 0; i < d.n; ++i) os << "g" << i << ",";
  for (std::size_t i = 0; i < d.n; ++i) os << "p" << i << (i + 1 < d.n ? "," : "\n");
  os.precision(17);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (double v : d.row_values(r)) os << v << ",";
    auto p = d.row_labels(r);
    for (std::size_t i = 0; i < d.n; ++i) os << int(p[i]) << (i + 1 < d.n ? "," : "\n");
  }
}

}  // namespace sgdd
