#include "snrilab/grad/adam.hpp"

#include <cmath>

#include "snrilab/common/errors.hpp"

namespace snrilab::grad {

void adam_step(Params& params, const GradMap& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw InvalidParams("adam: lr must be > 0");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) ||
      !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw InvalidParams("adam: betas must lie in [0, 1)");
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (const auto& [key, g] : grads) {
    auto pit = params.find(key);
    if (pit == params.end()) {
      throw ShapeMismatch("adam: gradient for unknown parameter " + key);
    }
    Param& p = pit->second;
    if (g.size() != p.size()) {
      throw ShapeMismatch("adam: gradient size " + std::to_string(g.size()) +
                          " vs parameter " + key + " size " +
                          std::to_string(p.size()));
    }
    auto& m = state.m[key];
    auto& v = state.v[key];
    if (m.empty()) m.assign(p.size(), 0.0);
    if (v.empty()) v.assign(p.size(), 0.0);
    if (m.size() != p.size() || v.size() != p.size()) {
      throw ShapeMismatch("adam: stale moment buffers for " + key);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace snrilab::grad
