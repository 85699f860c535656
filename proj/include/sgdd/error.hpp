#pragma once

#include <stdexcept>
#include <string>

namespace sgdd {

/// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  invalid_argument,
  empty_grid,
  degenerate_graph,
  disconnected_graph,
  dimension_mismatch,
  unsupported_cut,
  degenerate_dataset,
  non_finite_loss,
  config,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::empty_grid: return "empty-grid";
    case ErrorKind::degenerate_graph: return "degenerate-graph";
    case ErrorKind::disconnected_graph: return "disconnected-graph";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::unsupported_cut: return "unsupported-cut";
    case ErrorKind::degenerate_dataset: return "degenerate-dataset";
    case ErrorKind::non_finite_loss: return "non-finite-loss";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace sgdd
