#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "snrilab/grad/params.hpp"

namespace snrilab::grad {

struct GradCheckOptions {
  double h = 1e-5;               // central-difference step
  double tol = 1e-4;             // relative-error gate
  int samples_per_param = 4;     // coordinates probed per parameter
  std::uint64_t seed = 0x9e3779b97f4a7c15ull;
  // Parameters whose analytic gradient is intentionally blocked (behind a
  // stop_gradient barrier); finite differences still see them, so they must
  // be skipped rather than compared.
  std::set<std::string> exclude;
};

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_err = 0.0;
  int n_checked = 0;
  std::vector<GradCheckEntry> failures;
  GradCheckEntry worst;
};

// Evaluates the loss; fills `grads` with analytic gradients when non-null.
using LossWithGrad = std::function<double(const Params&, GradMap* grads)>;

// Compares analytic gradients against central finite differences on a random
// subsample of coordinates. Reports only; throws nothing on mismatch.
GradCheckReport grad_check(const LossWithGrad& eval, const Params& params,
                           const GradCheckOptions& opt);

}  // namespace snrilab::grad
