#pragma once

#include <vector>

#include "snrilab/audio/buffer.hpp"

namespace snrilab::metrics {

// Evaluation-grade kernels. Everything here is exact double-precision math
// with no graph attached; the differentiable counterparts live in the model
// layer and are tested against these.

struct ThresholdConfig {
  double tau = 1e-3;    // soft threshold inside the log; bounds losses at -10*log10(1/tau)
  double alpha = 0.8;   // speech-vs-noise weight in the separation loss
  double zeta = 0.5;    // mixture-consistency split
  double beta = 0.01;   // artifact-term weight in the target-improvement loss

  void validate() const;
};

// Improvement is capped once the residual energy drops below
// kResidualEps * ||s||^2; the raw ratio is unbounded at zero residual.
inline constexpr double kSnriCapDb = 100.0;
inline constexpr double kResidualEps = 1e-20;

struct SeparatedPair {
  audio::AudioBuffer speech;  // estimate of s
  audio::AudioBuffer noise;   // estimate of n
};

struct SarDecomposition {
  std::vector<double> e_interf;  // projection of y1 - s onto span{s, n}
  std::vector<double> e_artif;   // orthogonal remainder
  double sar_db = 0.0;           // 10*log10(||s||^2 / ||e_artif||^2), capped
  double sar_loss = 0.0;         // -10*log10(||s||^2 / (||e_artif||^2 + tau*||s||^2))
};

// 10*log10(||s||^2 / ||n||^2).
double snr(const std::vector<double>& s, const std::vector<double>& n);

// Output SNR minus input SNR for the speech estimate y1:
// 10*log10(||s||^2/||y1-s||^2) - 10*log10(||s||^2/||n||^2).
double snri(const std::vector<double>& s, const std::vector<double>& n,
            const std::vector<double>& y1);

// Least-squares split of the residual y1 - s into the component inside
// span{s, n} and the artifact remainder, via the 2x2 Gram system.
SarDecomposition sar_decompose(const std::vector<double>& s,
                               const std::vector<double>& n,
                               const std::vector<double>& y1,
                               const ThresholdConfig& cfg);

// -10*log10(||a||^2 / (||a - b||^2 + tau*||a||^2)).
double thresholded_snr_loss(const std::vector<double>& a,
                            const std::vector<double>& b, double tau);

// alpha * L(s, y.speech) + (1 - alpha) * L(n, y.noise).
double se_loss(const std::vector<double>& s, const std::vector<double>& n,
               const SeparatedPair& y, const ThresholdConfig& cfg);

// Distributes the residual e = x - (y1 + y2) so the estimates sum to x:
// y1' = y1 + zeta*e, y2' = y2 + (1-zeta)*e.
SeparatedPair mixture_consistency(const audio::AudioBuffer& x,
                                  const SeparatedPair& y, double zeta);

// y.speech + w * y.noise with w = 10^(-lambda/20): adds scaled noise back to
// hit an improvement target without touching the model.
audio::AudioBuffer postmix_control(const SeparatedPair& y, double lambda_db);

struct SnriTargetLoss {
  double total = 0.0;
  double snri_term = 0.0;  // |lambda - snri|^2
  double sar_term = 0.0;   // the thresholded artifact loss
};

// |lambda - snri(s,n,y1)|^2 + beta * sar_loss.
SnriTargetLoss snri_target_loss(const std::vector<double>& s,
                                const std::vector<double>& n,
                                const std::vector<double>& y1, double lambda_db,
                                const ThresholdConfig& cfg);

}  // namespace snrilab::metrics
