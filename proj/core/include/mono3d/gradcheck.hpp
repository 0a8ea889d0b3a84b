#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mono3d/rng.hpp"
#include "mono3d/tape.hpp"
#include "mono3d/tensor.hpp"

namespace mono3d {

// Central-difference validation of every backward pass. A check builds a
// scalar graph from leaf tensors, runs one analytic backward, then perturbs
// sampled coordinates by +-h (h = 1e-5 * max(1, |x|)) and compares
// (f(x+h) - f(x-h)) / 2h against the recorded gradient with
// |a - n| / max(1, |a|, |n|).

using GraphBuilder = std::function<TensorRef(Tape&)>;

// probe_sets[i], when non-empty, restricts leaf i's probed coordinates to
// the given flat indices (the interesting ones for sparse-consumption ops).
double fd_max_rel_err(const GraphBuilder& build, const std::vector<TensorRef>& leaves, Rng& rng,
                      int probes, const std::vector<std::vector<std::int64_t>>& probe_sets = {});

struct GradCheckOptions {
  std::uint64_t seed = 7;
  int trials = 100;
  double tolerance = 1e-4;
  int probes = 6;  // probed coordinates per leaf per trial
};

struct GradCheckReport {
  struct Row {
    std::string op;
    int trials = 0;
    double max_rel_err = 0;
  };
  std::vector<Row> rows;
  double tolerance = 0;

  bool passed() const;
  std::string table() const;
};

// Runs the full suite: every kernel op, the relation stage end to end, and
// each loss term through its decode path.
GradCheckReport run_gradient_checks(const GradCheckOptions& opt);

}  // namespace mono3d
