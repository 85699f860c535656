// sgdd: grid export, dataset generation, training, detection and evaluation.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgdd/sgdd.hpp"

using nlohmann::json;
using namespace sgdd;

namespace {

enum Exit : int {
  exit_ok = 0,
  exit_other = 1,
  exit_config = 2,
  exit_dimension = 3,
  exit_degenerate_dataset = 4,
  exit_non_finite_loss = 5,
  exit_io = 6,
  exit_grid = 7,
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument:
    case ErrorKind::unsupported_cut: return exit_config;
    case ErrorKind::dimension_mismatch: return exit_dimension;
    case ErrorKind::degenerate_dataset: return exit_degenerate_dataset;
    case ErrorKind::non_finite_loss: return exit_non_finite_loss;
    case ErrorKind::io: return exit_io;
    case ErrorKind::empty_grid:
    case ErrorKind::degenerate_graph:
    case ErrorKind::disconnected_graph: return exit_grid;
  }
  return exit_other;
}

/// Options of one subcommand that can also come from a config document.
/// Command-line values win over the document; the document wins over defaults.
class Settings {
 public:
  Settings(CLI::App* app, std::string section) : app_(app), section_(std::move(section)) {
    app_->add_option("--config", config_path_, "JSON config document (flat, or with a \"" + section_ + "\" section)");
  }

  template <class T>
  CLI::Option* add(const std::string& key, T& var, const std::string& help) {
    auto* opt = app_->add_option("--" + key, var, help)->capture_default_str();
    items_.push_back({key, opt, [&var](const json& j) { var = j.get<T>(); }, [&var] { return json(var); }});
    return opt;
  }

  CLI::Option* flag(const std::string& key, bool& var, const std::string& help) {
    auto* opt = app_->add_flag("--" + key + ",!--no-" + key, var, help);
    items_.push_back({key, opt, [&var](const json& j) { var = j.get<bool>(); }, [&var] { return json(var); }});
    return opt;
  }

  /// Fills every option not given on the command line from --config.
  void apply_config() {
    if (config_path_.empty()) return;
    std::ifstream in(config_path_);
    if (!in) fail(ErrorKind::io, "cannot read config " + config_path_);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorKind::config, config_path_ + ": " + e.what());
    }
    if (!doc.is_object()) fail(ErrorKind::config, config_path_ + ": expected an object");
    const json& sec = doc.contains(section_) && doc[section_].is_object() ? doc[section_] : doc;
    static const std::vector<std::string> sections{"grid", "dataset", "train", "detect", "eval", "image"};
    for (const auto& [key, value] : sec.items()) {
      if (&sec == &doc && std::find(sections.begin(), sections.end(), key) != sections.end()) continue;
      auto it = std::find_if(items_.begin(), items_.end(), [&](const Item& i) { return i.key == key; });
      if (it == items_.end()) fail(ErrorKind::config, "unknown config key '" + key + "' for " + section_);
      if (it->opt->count() > 0) continue;
      try {
        it->set(value);
      } catch (const json::exception& e) {
        fail(ErrorKind::config, "config key '" + key + "': " + e.what());
      }
    }
  }

  json resolved() const {
    json j = json::object();
    for (const auto& i : items_) j[i.key] = i.get();
    return json{{section_, j}};
  }

  bool given(const std::string& key) const {
    for (const auto& i : items_)
      if (i.key == key) return i.opt->count() > 0;
    return false;
  }

 private:
  struct Item {
    std::string key;
    CLI::Option* opt;
    std::function<void(const json&)> set;
    std::function<json()> get;
  };
  CLI::App* app_;
  std::string section_;
  std::string config_path_;
  std::vector<Item> items_;
};

void echo_config(const json& resolved) { std::cout << "config " << resolved.dump() << "\n"; }

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << j.dump(1) << "\n";
  if (!out) fail(ErrorKind::io, "short write on " + path);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::io, path + ": " + e.what());
  }
}

template <class Write>
void write_text(const std::string& path, Write w) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  w(out);
}

std::vector<double> parse_numbers(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      fail(ErrorKind::config, "bad number '" + tok + "' in " + what);
    }
  }
  return out;
}

std::pair<std::string, std::string> split_spec(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) return {s, ""};
  return {s.substr(0, colon), s.substr(colon + 1)};
}

int default_level(int dim) { return dim == 4 ? 8 : 6; }

// ---------------------------------------------------------------------------
// Targets and cuts

struct Target {
  std::string spec;
  Function g;
  Box domain = Box::from_bounds(-1, 1, 2);
  CutPtr cut;  // null for images
  std::shared_ptr<const GrayImage> image;
  int dim() const { return domain.dim(); }
};

PiecewiseFunction function_from_file(const std::string& arg) {
  std::string path = arg;
  std::size_t index = 0;
  if (auto hash = arg.rfind('#'); hash != std::string::npos) {
    path = arg.substr(0, hash);
    index = static_cast<std::size_t>(std::stoul(arg.substr(hash + 1)));
  }
  json doc = read_json(path);
  const json* f = &doc;
  if (doc.contains("functions")) {
    if (index >= doc["functions"].size()) fail(ErrorKind::config, path + ": function index out of range");
    f = &doc["functions"][index];
  }
  try {
    return PiecewiseFunction::from_json(*f);
  } catch (const json::exception& e) {
    fail(ErrorKind::io, path + ": " + e.what());
  }
}

/// builtin:<name> | function:<file>[#k] | image:<pgm> | phantom:<r>
Target make_target(const std::string& spec, double lo, double hi, bool box_given) {
  auto [kind, arg] = split_spec(spec);
  Target t;
  t.spec = spec;
  if (kind == "builtin") {
    auto tf = builtin_test_function(arg);
    t.domain = tf.domain;
    t.cut = tf.g.cut;
    t.g = tf.function();
  } else if (kind == "function") {
    auto f = function_from_file(arg);
    t.domain = Box::from_bounds(lo, hi, f.dim());
    t.cut = f.cut;
    t.g = [f](std::span<const double> x) { return f(x); };
  } else if (kind == "image" || kind == "phantom") {
    GrayImage img;
    if (kind == "image") {
      img = read_pgm(arg);
    } else {
      try {
        img = shepp_logan(std::stoul(arg));
      } catch (const std::logic_error&) {
        fail(ErrorKind::config, "bad phantom resolution '" + arg + "'");
      }
    }
    t.image = std::make_shared<const GrayImage>(std::move(img));
    t.domain = image_domain(*t.image);
    t.g = image_function(t.image);
  } else {
    fail(ErrorKind::config, "unknown target '" + spec + "' (builtin:, function:, image:, phantom:)");
  }
  if (box_given && t.cut) t.domain = Box::from_bounds(lo, hi, t.dim());
  return t;
}

/// builtin:<name> | file:<json> | linear:w1,..,wn,b | sphere:c1,..,cn,r
CutPtr parse_cut(const std::string& spec) {
  auto [kind, arg] = split_spec(spec);
  if (kind == "builtin") return builtin_test_function(arg).g.cut;
  if (kind == "file") {
    json doc = read_json(arg);
    try {
      if (doc.contains("cut")) return cut_from_json(doc["cut"]);
      if (doc.contains("target") && doc["target"].contains("cut")) return cut_from_json(doc["target"]["cut"]);
      return cut_from_json(doc);
    } catch (const json::exception& e) {
      fail(ErrorKind::io, arg + ": " + e.what());
    }
  }
  if (kind == "linear" || kind == "sphere") {
    auto v = parse_numbers(arg, spec);
    if (v.size() < 2) fail(ErrorKind::config, "cut '" + spec + "' needs at least two numbers");
    const double last = v.back();
    v.pop_back();
    if (kind == "linear") return std::make_shared<LinearCut>(v, last);
    return std::make_shared<SphericalCut>(v, last);
  }
  fail(ErrorKind::config, "unknown cut '" + spec + "' (builtin:, file:, linear:, sphere:)");
}

struct DetectorChoice {
  DetectorPtr detector;
  std::optional<LoadedModel> model;
};

/// exact[:<cut>] | zlevel:<t>[:<cut>] | nn:<model>
DetectorChoice make_detector(const std::string& spec, const Target& target) {
  auto [kind, arg] = split_spec(spec);
  auto target_cut = [&]() -> CutPtr {
    if (!target.cut) fail(ErrorKind::unsupported_cut, "target '" + target.spec + "' has no known cut; use nn:<model>");
    return target.cut;
  };
  DetectorChoice out;
  if (kind == "exact") {
    auto cut = arg.empty() ? target_cut() : parse_cut(arg);
    out.detector = std::make_shared<ExactOracle>(cut);
  } else if (kind == "zlevel") {
    auto [t_str, cut_spec] = split_spec(arg);
    int t = 0;
    try {
      t = std::stoi(t_str);
    } catch (const std::logic_error&) {
      fail(ErrorKind::config, "bad zlevel order '" + t_str + "'");
    }
    auto cut = cut_spec.empty() ? target_cut() : parse_cut(cut_spec);
    out.detector = std::make_shared<ZLevelDetector>(cut, t);
  } else if (kind == "nn") {
    out.model = load_model(arg);
    out.detector = std::make_shared<NnDetector>(out.model->network, "nn:" + arg);
  } else {
    fail(ErrorKind::config, "unknown detector '" + spec + "' (exact, zlevel:<t>, nn:<model>)");
  }
  return out;
}

// ---------------------------------------------------------------------------
// grid

struct GridOpts {
  std::string rule = "sum";
  int level = 6;
  int dim = 2;
  double lo = -1.0, hi = 1.0;
  std::string out;
};

void add_grid_options(Settings& s, GridOpts& o) {
  s.add("rule", o.rule, "index rule: sum, prod or max");
  s.add("level", o.level, "level L of the index set");
  s.add("dim", o.dim, "dimension n");
  s.add("lo", o.lo, "lower bound of the box on every axis");
  s.add("hi", o.hi, "upper bound of the box on every axis");
}

int cmd_grid(const GridOpts& o, const json& resolved) {
  echo_config(resolved);
  GridSpec spec{o.dim, parse_index_rule(o.rule), o.level};
  auto grid = SparseGrid::build(spec, Box::from_bounds(o.lo, o.hi, o.dim));
  auto graph = GridGraph::build(grid);
  const int diam = graph_diameter(graph);
  std::cout << "N = " << grid.size() << "\n"
            << "h_max = " << grid.max_level() << "\n"
            << "M = " << grid.resolution() << "\n"
            << "edges = " << graph.edges().size() << "\n"
            << "diameter = " << diam << "\n"
            << "grid_hash = " << hex64(grid_hash(grid)) << "\n";
  if (!o.out.empty()) {
    json j = grid_to_json(grid, graph);
    j["grid_hash"] = hex64(grid_hash(grid));
    j["config"] = resolved;
    write_json(j, o.out);
  }
  return exit_ok;
}

// ---------------------------------------------------------------------------
// dataset

struct DatasetOpts {
  GridOpts grid;
  std::size_t per_kind = 200;
  int t = 149;
  double lambda_min = 0.0;  // 0: domain edge / 2^(h_max + 1)
  double tau = 0.5;
  std::string boundary = "clip-stop";
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool balance = true;
  std::string csv;
  std::string functions_out;
};

int cmd_dataset(DatasetOpts& o, Settings& s) {
  if (o.grid.level <= 0) o.grid.level = default_level(o.grid.dim);
  GridSpec spec{o.grid.dim, parse_index_rule(o.grid.rule), o.grid.level};
  const Box domain = Box::from_bounds(o.grid.lo, o.grid.hi, o.grid.dim);
  auto ref = SparseGrid::build(spec, domain);
  auto graph = GridGraph::build(ref);
  if (o.grid.out.empty()) fail(ErrorKind::config, "dataset needs --out");
  if (o.lambda_min <= 0) o.lambda_min = default_lambda_min(ref, domain);
  if (o.threads == 0) o.threads = default_thread_count();
  const json resolved = s.resolved();
  echo_config(resolved);

  std::mt19937_64 rng(o.seed);
  auto fns = sample_functions(o.grid.dim, o.per_kind, rng);
  DatasetConfig dc;
  dc.t = o.t;
  dc.lambda_min = o.lambda_min;
  dc.tau = o.tau;
  dc.domain = domain;
  dc.boundary = parse_boundary_policy(o.boundary);
  dc.threads = o.threads;
  GenerationLog log;
  auto full = generate_dataset(ref, graph, fns, dc, &log);
  const std::size_t generated = full.rows();
  if (generated == 0) fail(ErrorKind::degenerate_dataset, "no samples were generated");
  Dataset kept = o.balance ? balance_dataset(full, rng) : full;
  auto split = split_dataset(kept, rng);

  Dataset out = kept.empty_like();
  for (const Dataset* part : {&split.train, &split.validation, &split.test})
    for (std::size_t r = 0; r < part->rows(); ++r) out.append_row(*part, r);
  std::string per_fn;
  for (std::size_t k = 0; k < log.samples_per_function.size(); ++k)
    per_fn += (k ? "," : "") + std::to_string(log.samples_per_function[k]);
  out.header["grid.hash"] = hex64(grid_hash(ref));
  out.header["seed"] = std::to_string(o.seed);
  out.header["functions.skipped"] = std::to_string(log.skipped);
  out.header["samples.generated"] = std::to_string(generated);
  out.header["samples.per_function"] = per_fn;
  out.header["samples.kept"] = std::to_string(out.rows());
  out.header["balanced"] = o.balance ? "1" : "0";
  out.header["split.train"] = std::to_string(split.train.rows());
  out.header["split.validation"] = std::to_string(split.validation.rows());
  out.header["split.test"] = std::to_string(split.test.rows());
  out.header["config"] = resolved.dump();
  save_dataset(out, o.grid.out);
  if (!o.csv.empty()) write_text(o.csv, [&](std::ostream& os) { export_dataset_csv(out, os); });
  if (!o.functions_out.empty()) {
    json arr = json::array();
    for (const auto& f : fns) arr.push_back(f.to_json());
    write_json(json{{"functions", arr}}, o.functions_out);
  }
  std::cout << "functions = " << log.functions << " (skipped " << log.skipped << ")\n"
            << "samples generated = " << generated << "\n"
            << "samples kept = " << out.rows() << "\n"
            << "split train/validation/test = " << split.train.rows() << "/" << split.validation.rows() << "/"
            << split.test.rows() << "\n";
  return exit_ok;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string dataset;
  std::string out;
  std::string history;
  std::string kind = "ginn";
  std::size_t features = 15;
  int blocks = -1;
  std::string expect_grid;  // optional rule:level:dim the model must be built for
  nn::TrainConfig tc;
  std::uint64_t model_seed = 0;
  bool verbose = false;
};

std::size_t header_count(const Dataset& d, const std::string& key) {
  auto it = d.header.find(key);
  if (it == d.header.end()) fail(ErrorKind::io, "dataset header lacks '" + key + "'");
  return std::stoul(it->second);
}

int cmd_train(TrainOpts& o, Settings& s) {
  if (o.dataset.empty() || o.out.empty()) fail(ErrorKind::config, "train needs --dataset and --out");
  const json resolved = s.resolved();
  echo_config(resolved);
  o.tc.validate();
  Dataset all = load_dataset(o.dataset);
  GridSpec spec;
  try {
    spec = GridSpec{std::stoi(all.header.at("grid.dim")), parse_index_rule(all.header.at("grid.rule")),
                    std::stoi(all.header.at("grid.level"))};
  } catch (const std::out_of_range&) {
    fail(ErrorKind::io, o.dataset + ": header lacks the grid spec");
  }
  if (!o.expect_grid.empty()) {
    auto parts = parse_numbers(o.expect_grid.substr(o.expect_grid.find(':') + 1), "expect-grid");
    const GridSpec want{parts.size() > 1 ? static_cast<int>(parts[1]) : spec.dim,
                        parse_index_rule(o.expect_grid.substr(0, o.expect_grid.find(':'))),
                        parts.empty() ? spec.level : static_cast<int>(parts[0])};
    auto a = SparseGrid::build(want, Box::from_bounds(-1, 1, want.dim));
    if (hex64(grid_hash(a)) != all.header["grid.hash"])
      fail(ErrorKind::dimension_mismatch, "dataset grid " + all.header["grid.hash"] + " differs from the model grid " +
                                              hex64(grid_hash(a)));
  }
  auto ref = SparseGrid::build(spec, Box::from_bounds(-1, 1, spec.dim));
  if (auto it = all.header.find("grid.hash"); it != all.header.end() && it->second != hex64(grid_hash(ref)))
    fail(ErrorKind::dimension_mismatch, "dataset grid hash does not match its grid spec");
  if (all.n != ref.size()) fail(ErrorKind::dimension_mismatch, "dataset width does not match its grid");
  auto graph = GridGraph::build(ref);

  const std::size_t n_train = header_count(all, "split.train"), n_val = header_count(all, "split.validation"),
                    n_test = header_count(all, "split.test");
  if (n_train + n_val + n_test != all.rows()) fail(ErrorKind::io, "dataset split counts do not add up");
  if (n_train == 0 || n_val == 0) fail(ErrorKind::degenerate_dataset, "empty training or validation split");
  DatasetSplit split{all.empty_like(), all.empty_like(), all.empty_like()};
  for (std::size_t r = 0; r < all.rows(); ++r)
    (r < n_train ? split.train : r < n_train + n_val ? split.validation : split.test).append_row(all, r);

  nn::ModelConfig mc;
  mc.kind = nn::parse_model_kind(o.kind);
  mc.features = o.features;
  mc.residual_blocks = o.blocks;
  mc.seed = o.model_seed;
  auto net = nn::build_archetype(mc, graph);
  std::cout << "model = " << o.kind << ", blocks = " << net->blocks() << ", trainable = " << net->trainable_count()
            << "\n";
  auto hist = nn::train(*net, split, o.tc, [&](const nn::EpochRecord& e) {
    if (o.verbose)
      std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " val " << e.val_loss << " lr " << e.learning_rate
                << "\n";
  });
  json doc = model_to_json(*net, ref, graph, &hist);
  json metrics = json::object();
  for (auto [name, part] : {std::pair<const char*, const Dataset*>{"train", &split.train},
                            {"validation", &split.validation},
                            {"test", &split.test}}) {
    if (part->rows() == 0) continue;
    auto m = nn::evaluate_model(*net, *part, o.tc);
    metrics[name] = {{"loss", m.loss}, {"mae", m.mae}};
    std::cout << name << " loss = " << m.loss << ", mae = " << m.mae << "\n";
  }
  doc["metrics"] = metrics;
  doc["run_config"] = resolved;
  write_json(doc, o.out);
  if (!o.history.empty())
    write_text(o.history, [&](std::ostream& os) {
      os.precision(17);
      os << "epoch,train_loss,val_loss,learning_rate\n";
      for (const auto& e : hist.epochs) os << e.epoch << "," << e.train_loss << "," << e.val_loss << "," << e.learning_rate << "\n";
    });
  std::cout << "epochs = " << hist.epochs.size() << ", best epoch = " << hist.best_epoch
            << ", best val loss = " << hist.best_val_loss << "\n";
  return exit_ok;
}

// ---------------------------------------------------------------------------
// detect / image

struct DetectOpts {
  std::string target = "builtin:circle";
  std::string detector = "exact";
  std::string rule = "sum";
  int level = 0;  // 0: model level, else 6 (2D) / 8 (4D)
  double lo = -1.0, hi = 1.0;
  double lambda_min = 0.0;  // 0: domain edge / 2^(h_max + 1)
  double tau = 0.5;
  std::string boundary = "clip-stop";
  bool basic = false;
  bool cache = true;
  std::size_t budget = 0;
  std::string out;
  std::string csv;
};

int cmd_detect(DetectOpts& o, Settings& s) {
  auto target = make_target(o.target, o.lo, o.hi, s.given("lo") || s.given("hi"));
  auto choice = make_detector(o.detector, target);
  GridSpec spec{target.dim(), parse_index_rule(o.rule), o.level > 0 ? o.level : default_level(target.dim())};
  if (choice.model) {
    const GridSpec& ms = choice.model->spec;
    if (ms.dim != target.dim())
      fail(ErrorKind::dimension_mismatch, "model is " + std::to_string(ms.dim) + "D but the target is " +
                                              std::to_string(target.dim()) + "D");
    if ((s.given("rule") && parse_index_rule(o.rule) != ms.rule) || (o.level > 0 && o.level != ms.level))
      fail(ErrorKind::dimension_mismatch, "requested grid differs from the model grid");
    spec = ms;
  }
  o.rule = to_string(spec.rule);
  o.level = spec.level;
  auto ref = SparseGrid::build(spec, target.domain);
  auto graph = GridGraph::build(ref);
  if (choice.model && choice.model->grid_hash != hex64(grid_hash(ref)))
    fail(ErrorKind::dimension_mismatch, "model grid hash does not match the rebuilt grid");
  if (o.lambda_min <= 0) o.lambda_min = default_lambda_min(ref, target.domain);
  const json resolved = s.resolved();
  echo_config(resolved);

  EngineConfig ec;
  ec.domain = target.domain;
  ec.lambda_min = o.lambda_min;
  ec.tau = o.tau;
  ec.boundary = parse_boundary_policy(o.boundary);
  ec.cache_evaluations = o.cache;
  if (o.budget > 0) ec.evaluation_budget = o.budget;
  DetectionEngine engine(ref, graph, choice.detector, ec);
  auto run = o.basic ? engine.run_basic(target.g, engine.root_task()) : engine.run_batched(target.g, engine.root_task());

  json report;
  report["format"] = "sgdd-run";
  report["config"] = resolved;
  report["target"] = {{"spec", target.spec}, {"dim", target.dim()}};
  if (target.cut) report["target"]["cut"] = target.cut->to_json();
  report["detector"] = choice.detector->name();
  report["grid"] = {{"spec", grid_spec_to_json(spec)}, {"n_points", ref.size()}, {"grid_hash", hex64(grid_hash(ref))}};
  report["engine"] = engine_config_to_json(ec);
  report["run"] = run_to_json(run);
  if (!o.out.empty()) write_json(report, o.out);
  if (!o.csv.empty()) write_text(o.csv, [&](std::ostream& os) { write_troubled_csv(run, os); });
  std::cout << "troubled = " << run.troubled.size() << "\n"
            << "visited = " << run.visited_points << "\n"
            << "evaluations = " << run.evaluations << "\n"
            << "tasks = " << run.tasks_processed << "\n"
            << "generations = " << run.generations() << "\n";
  if (run.truncated) std::cout << "truncated = true\n";
  return exit_ok;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
  std::string report;
  std::string cut;  // default: the cut recorded in the report
  double lambda_min = 0.0;
  std::string check_rule;
  int check_level = 0;
  int samples = 1000;
  std::string out;
  std::string csv;
};

int cmd_eval(EvalOpts& o, Settings& s) {
  if (o.report.empty()) fail(ErrorKind::config, "eval needs --report");
  json report = read_json(o.report);
  if (report.value("format", "") != "sgdd-run") fail(ErrorKind::io, o.report + " is not a run report");
  CutPtr cut;
  if (!o.cut.empty()) {
    cut = parse_cut(o.cut);
  } else if (report["target"].contains("cut")) {
    cut = cut_from_json(report["target"]["cut"]);
  } else {
    fail(ErrorKind::config, "the report has no cut; pass --cut");
  }
  GridSpec spec = grid_spec_from_json(report.at("grid").at("spec"));
  if (!o.check_rule.empty()) spec.rule = parse_index_rule(o.check_rule);
  if (o.check_level > 0) spec.level = o.check_level;
  o.check_rule = to_string(spec.rule);
  o.check_level = spec.level;
  if (o.lambda_min <= 0) o.lambda_min = report.at("engine").at("lambda_min").get<double>();
  if (cut->dim() != spec.dim) fail(ErrorKind::dimension_mismatch, "cut dimension does not match the report");
  const json resolved = s.resolved();
  echo_config(resolved);

  auto troubled = troubled_from_json(report);
  TprOptions opt;
  opt.sign_samples = o.samples;
  const auto visited = report["run"]["counters"].value("visited_points", std::size_t{0});
  auto rep = true_positive_rate(troubled, *cut, o.lambda_min, spec, opt, visited);
  json j = tpr_to_json(rep);
  j["config"] = resolved;
  if (!o.out.empty()) write_json(j, o.out);
  if (!o.csv.empty()) write_text(o.csv, [&](std::ostream& os) { write_verdicts_csv(troubled, rep, os); });
  std::cout << "troubled = " << rep.troubled_count << "\n"
            << "true troubled = " << rep.true_count << "\n"
            << "visited = " << rep.visited_count << "\n";
  if (rep.defined)
    std::cout << "tpr = " << rep.tpr << "\n";
  else
    std::cout << "tpr = undefined (no troubled points)\n";
  return exit_ok;
}

void add_detect_options(Settings& s, DetectOpts& o, bool image) {
  if (!image) s.add("target", o.target, "builtin:<name> | function:<file>[#k] | image:<pgm> | phantom:<r>");
  s.add("detector", o.detector, "exact[:<cut>] | zlevel:<t>[:<cut>] | nn:<model>");
  s.add("rule", o.rule, "index rule of the detection grid");
  s.add("level", o.level, "level of the detection grid (0: model level, or 6 in 2D and 8 in 4D)");
  if (!image) {
    s.add("lo", o.lo, "domain lower bound (function targets)");
    s.add("hi", o.hi, "domain upper bound (function targets)");
  }
  s.add("lambda-min", o.lambda_min, "minimum edge length (0: domain edge / 2^(h_max+1))");
  s.add("tau", o.tau, "threshold on detector output");
  s.add("boundary", o.boundary, "clip-stop or ignore");
  s.flag("basic", o.basic, "use the one-grid-at-a-time loop instead of the batched one");
  s.flag("cache", o.cache, "reuse evaluations at coincident points");
  s.add("budget", o.budget, "stop after this many evaluations (0: no limit)");
  s.add("out", o.out, "run report (JSON)");
  s.add("csv", o.csv, "troubled points (CSV)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-grid discontinuity detection"};
  app.require_subcommand(1);

  auto* grid_cmd = app.add_subcommand("grid", "build a sparse grid and its graph");
  GridOpts grid_o;
  Settings grid_s(grid_cmd, "grid");
  add_grid_options(grid_s, grid_o);
  grid_s.add("out", grid_o.out, "write points, edges, adjacency and diameter (JSON)");

  auto* data_cmd = app.add_subcommand("dataset", "generate, balance and split a training set");
  DatasetOpts data_o;
  data_o.grid.level = 0;  // 6 in 2D, 8 in 4D
  Settings data_s(data_cmd, "dataset");
  add_grid_options(data_s, data_o.grid);
  data_s.add("out", data_o.grid.out, "dataset file (a .hdr header is written next to it)");
  data_s.add("per-kind", data_o.per_kind, "functions per cut family (linear, spherical, polynomial)");
  data_s.add("t", data_o.t, "detector Z^(t+1) used to label samples");
  data_s.add("lambda-min", data_o.lambda_min, "minimum edge length (0: domain edge / 2^(h_max+1))");
  data_s.add("tau", data_o.tau, "threshold on detector output");
  data_s.add("boundary", data_o.boundary, "clip-stop or ignore");
  data_s.add("seed", data_o.seed, "seed for functions, balancing and split");
  data_s.add("threads", data_o.threads, "worker threads (0: DISCDET_THREADS or 1)");
  data_s.flag("balance", data_o.balance, "drop surplus all-zero samples");
  data_s.add("csv", data_o.csv, "also export the rows as CSV");
  data_s.add("functions-out", data_o.functions_out, "write the sampled functions (JSON)");

  auto* train_cmd = app.add_subcommand("train", "train a GINN or MLP detector");
  TrainOpts train_o;
  Settings train_s(train_cmd, "train");
  train_s.add("dataset", train_o.dataset, "dataset file from the dataset command");
  train_s.add("out", train_o.out, "model file (JSON)");
  train_s.add("history", train_o.history, "per-epoch history (CSV)");
  train_s.add("kind", train_o.kind, "ginn or mlp");
  train_s.add("features", train_o.features, "features per node F (GINN)");
  train_s.add("blocks", train_o.blocks, "residual blocks (-1: half the graph diameter)");
  train_s.add("expect-grid", train_o.expect_grid, "refuse datasets not built on <rule>:<level>[,<dim>]");
  train_s.add("model-seed", train_o.model_seed, "weight initialisation seed");
  train_s.add("seed", train_o.tc.seed, "mini-batch shuffling seed");
  train_s.add("mu0", train_o.tc.mu0, "loss weight of label 0");
  train_s.add("mu1", train_o.tc.mu1, "loss weight of label 1");
  train_s.add("batch", train_o.tc.batch_size, "mini-batch size");
  train_s.add("lr", train_o.tc.learning_rate, "initial learning rate");
  train_s.add("beta1", train_o.tc.beta1, "Adam beta1");
  train_s.add("beta2", train_o.tc.beta2, "Adam beta2");
  train_s.add("adam-epsilon", train_o.tc.adam_epsilon, "Adam epsilon");
  train_s.add("plateau-factor", train_o.tc.plateau_factor, "learning-rate reduction factor");
  train_s.add("plateau-patience", train_o.tc.plateau_patience, "epochs without improvement before reducing");
  train_s.add("plateau-min-delta", train_o.tc.plateau_min_delta, "minimum improvement of the validation loss");
  train_s.add("patience", train_o.tc.early_stop_patience, "early-stopping patience");
  train_s.flag("restore-best", train_o.tc.restore_best, "restore the weights of the best epoch");
  train_s.add("epochs", train_o.tc.max_epochs, "maximum epochs");
  train_s.flag("verbose", train_o.verbose, "print every epoch to stderr");

  auto* detect_cmd = app.add_subcommand("detect", "run the adaptive search on a target");
  DetectOpts detect_o;
  Settings detect_s(detect_cmd, "detect");
  add_detect_options(detect_s, detect_o, false);

  auto* image_cmd = app.add_subcommand("image", "detect edges in a graymap (detect with an image target)");
  DetectOpts image_o;
  image_o.detector = "nn:model.json";
  std::string pgm;
  std::size_t phantom = 0;
  Settings image_s(image_cmd, "image");
  image_s.add("pgm", pgm, "PGM file (P2 or P5)");
  image_s.add("phantom", phantom, "use the Shepp-Logan phantom at this resolution instead");
  add_detect_options(image_s, image_o, true);

  auto* eval_cmd = app.add_subcommand("eval", "true positive rate of a run report");
  EvalOpts eval_o;
  Settings eval_s(eval_cmd, "eval");
  eval_s.add("report", eval_o.report, "run report from detect");
  eval_s.add("cut", eval_o.cut, "builtin:<name> | file:<json> | linear:w..,b | sphere:c..,r (default: from the report)");
  eval_s.add("lambda-min", eval_o.lambda_min, "neighbourhood size (0: the run's lambda_min)");
  eval_s.add("check-rule", eval_o.check_rule, "index rule of the check grid (default: the run's)");
  eval_s.add("check-level", eval_o.check_level, "level of the check grid (0: the run's)");
  eval_s.add("samples", eval_o.samples, "sign samples per edge when the cut has no closed form");
  eval_s.add("out", eval_o.out, "TPR report (JSON)");
  eval_s.add("csv", eval_o.csv, "per-point verdicts (CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config;
  }

  try {
    if (grid_cmd->parsed()) {
      grid_s.apply_config();
      return cmd_grid(grid_o, grid_s.resolved());
    }
    if (data_cmd->parsed()) {
      data_s.apply_config();
      return cmd_dataset(data_o, data_s);
    }
    if (train_cmd->parsed()) {
      train_s.apply_config();
      return cmd_train(train_o, train_s);
    }
    if (detect_cmd->parsed()) {
      detect_s.apply_config();
      return cmd_detect(detect_o, detect_s);
    }
    if (image_cmd->parsed()) {
      image_s.apply_config();
      if (pgm.empty() == (phantom == 0)) fail(ErrorKind::config, "image needs exactly one of --pgm and --phantom");
      image_o.target = pgm.empty() ? "phantom:" + std::to_string(phantom) : "image:" + pgm;
      return cmd_detect(image_o, image_s);
    }
    if (eval_cmd->parsed()) {
      eval_s.apply_config();
      return cmd_eval(eval_o, eval_s);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_other;
  }
  return exit_ok;
}
