#include "snrilab/grad/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "snrilab/common/errors.hpp"
#include "snrilab/common/rng.hpp"

namespace snrilab::grad {

GradCheckReport grad_check(const LossWithGrad& eval, const Params& params,
                           const GradCheckOptions& opt) {
  if (!(opt.h > 0.0)) throw InvalidParams("grad_check: h must be > 0");
  if (!(opt.tol > 0.0)) throw InvalidParams("grad_check: tol must be > 0");

  GradMap grads;
  eval(params, &grads);

  Rng rng(opt.seed);
  Params work = params;
  GradCheckReport report;

  for (const auto& [key, p] : params) {
    if (opt.exclude.count(key)) continue;
    auto git = grads.find(key);
    const bool have_grad = git != grads.end();
    const std::size_t n = p.size();
    const int samples = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::max(1, opt.samples_per_param)));
    for (int s = 0; s < samples; ++s) {
      const std::size_t idx =
          (samples == static_cast<int>(n)) ? static_cast<std::size_t>(s)
                                           : rng.uniform_index(n);
      const double analytic = have_grad ? git->second[idx] : 0.0;

      auto& coord = work.at(key).value[idx];
      const double orig = coord;
      coord = orig + opt.h;
      const double fp = eval(work, nullptr);
      coord = orig - opt.h;
      const double fm = eval(work, nullptr);
      coord = orig;
      const double numeric = (fp - fm) / (2.0 * opt.h);

      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1.0});
      const double rel = std::fabs(analytic - numeric) / denom;

      GradCheckEntry entry{key, idx, analytic, numeric, rel};
      report.n_checked += 1;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = entry;
      }
      if (rel > opt.tol) {
        report.passed = false;
        if (report.failures.size() < 32) report.failures.push_back(entry);
      }
    }
  }
  return report;
}

}  // namespace snrilab::grad
