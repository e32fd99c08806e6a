#include "snrilab/metrics/metrics.hpp"

#include <cmath>
#include <string>

#include "snrilab/common/errors.hpp"

namespace snrilab::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* where) {
  if (a != b) {
    throw LengthMismatch(std::string(where) + ": lengths " + std::to_string(a) +
                         " vs " + std::to_string(b));
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double energy_of(const std::vector<double>& a) { return dot(a, a); }

double residual_energy(const std::vector<double>& ref,
                       const std::vector<double>& est) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = est[i] - ref[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

void ThresholdConfig::validate() const {
  if (!(tau > 0.0)) throw InvalidParams("tau must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidParams("alpha must be in [0,1]");
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw InvalidParams("zeta must be in [0,1]");
  if (!(beta >= 0.0)) throw InvalidParams("beta must be >= 0");
}

double snr(const std::vector<double>& s, const std::vector<double>& n) {
  check_lengths(s.size(), n.size(), "snr");
  const double es = energy_of(s);
  const double en = energy_of(n);
  if (es <= 0.0) throw SilentReference("snr: reference has zero energy");
  if (en <= 0.0) throw SilentNoise("snr: noise has zero energy");
  return 10.0 * std::log10(es / en);
}

double snri(const std::vector<double>& s, const std::vector<double>& n,
            const std::vector<double>& y1) {
  check_lengths(s.size(), n.size(), "snri");
  check_lengths(s.size(), y1.size(), "snri");
  const double es = energy_of(s);
  const double en = energy_of(n);
  if (es <= 0.0) throw SilentReference("snri: reference has zero energy");
  if (en <= 0.0) throw SilentNoise("snri: noise has zero energy");
  const double er = residual_energy(s, y1);
  if (er < kResidualEps * es) return kSnriCapDb;
  return 10.0 * std::log10(es / er) - 10.0 * std::log10(es / en);
}

SarDecomposition sar_decompose(const std::vector<double>& s,
                               const std::vector<double>& n,
                               const std::vector<double>& y1,
                               const ThresholdConfig& cfg) {
  cfg.validate();
  check_lengths(s.size(), n.size(), "sar_decompose");
  check_lengths(s.size(), y1.size(), "sar_decompose");
  const double ss = energy_of(s);
  const double nn = energy_of(n);
  if (ss <= 0.0) throw SilentReference("sar_decompose: reference has zero energy");
  if (nn <= 0.0) throw SilentNoise("sar_decompose: noise has zero energy");

  const double sn = dot(s, n);
  const double det = ss * nn - sn * sn;
  if (det <= 1e-12 * ss * nn) {
    throw DegenerateSubspace("sar_decompose: s and n are (nearly) collinear");
  }

  std::vector<double> r(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) r[i] = y1[i] - s[i];
  const double sr = dot(s, r);
  const double nr = dot(n, r);
  // Gram solve for the coefficients of the projection onto span{s, n}.
  const double a = (nn * sr - sn * nr) / det;
  const double b = (ss * nr - sn * sr) / det;

  SarDecomposition out;
  out.e_interf.resize(s.size());
  out.e_artif.resize(s.size());
  double ea = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.e_interf[i] = a * s[i] + b * n[i];
    out.e_artif[i] = r[i] - out.e_interf[i];
    ea += out.e_artif[i] * out.e_artif[i];
  }
  out.sar_db = (ea < kResidualEps * ss) ? kSnriCapDb : 10.0 * std::log10(ss / ea);
  out.sar_loss = -10.0 * std::log10(ss / (ea + cfg.tau * ss));
  return out;
}

double thresholded_snr_loss(const std::vector<double>& a,
                            const std::vector<double>& b, double tau) {
  if (!(tau > 0.0)) throw InvalidParams("tau must be > 0");
  check_lengths(a.size(), b.size(), "thresholded_snr_loss");
  const double ea = energy_of(a);
  if (ea <= 0.0) throw SilentReference("thresholded_snr_loss: reference has zero energy");
  const double ed = residual_energy(a, b);
  return -10.0 * std::log10(ea / (ed + tau * ea));
}

double se_loss(const std::vector<double>& s, const std::vector<double>& n,
               const SeparatedPair& y, const ThresholdConfig& cfg) {
  cfg.validate();
  return cfg.alpha * thresholded_snr_loss(s, y.speech.samples, cfg.tau) +
         (1.0 - cfg.alpha) * thresholded_snr_loss(n, y.noise.samples, cfg.tau);
}

SeparatedPair mixture_consistency(const audio::AudioBuffer& x,
                                  const SeparatedPair& y, double zeta) {
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw InvalidParams("zeta must be in [0,1]");
  check_lengths(x.size(), y.speech.size(), "mixture_consistency");
  check_lengths(x.size(), y.noise.size(), "mixture_consistency");

  SeparatedPair out;
  out.speech.sample_rate = x.sample_rate;
  out.noise.sample_rate = x.sample_rate;
  out.speech.samples.resize(x.size());
  out.noise.samples.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = x.samples[i] - (y.speech.samples[i] + y.noise.samples[i]);
    out.speech.samples[i] = y.speech.samples[i] + zeta * e;
    out.noise.samples[i] = y.noise.samples[i] + (1.0 - zeta) * e;
  }
  return out;
}

audio::AudioBuffer postmix_control(const SeparatedPair& y, double lambda_db) {
  if (!std::isfinite(lambda_db)) throw InvalidParams("lambda_db must be finite");
  check_lengths(y.speech.size(), y.noise.size(), "postmix_control");
  const double w = std::pow(10.0, -lambda_db / 20.0);
  audio::AudioBuffer out;
  out.sample_rate = y.speech.sample_rate;
  out.samples.resize(y.speech.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = y.speech.samples[i] + w * y.noise.samples[i];
  }
  return out;
}

SnriTargetLoss snri_target_loss(const std::vector<double>& s,
                                const std::vector<double>& n,
                                const std::vector<double>& y1, double lambda_db,
                                const ThresholdConfig& cfg) {
  cfg.validate();
  if (!std::isfinite(lambda_db)) throw InvalidParams("lambda_db must be finite");
  SnriTargetLoss out;
  const double achieved = snri(s, n, y1);
  const double diff = lambda_db - achieved;
  out.snri_term = diff * diff;
  out.sar_term = sar_decompose(s, n, y1, cfg).sar_loss;
  out.total = out.snri_term + cfg.beta * out.sar_term;
  return out;
}

}  // namespace snrilab::metrics
