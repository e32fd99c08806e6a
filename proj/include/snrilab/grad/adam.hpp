#pragma once

#include "snrilab/grad/params.hpp"

namespace snrilab::grad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long long step = 0;
  std::map<std::string, std::vector<double>> m;  // first moments
  std::map<std::string, std::vector<double>> v;  // second moments
};

// Standard bias-corrected update. Only parameters present in `grads` are
// touched; others keep their moments untouched as well (a skipped network
// neither moves nor decays).
void adam_step(Params& params, const GradMap& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace snrilab::grad
