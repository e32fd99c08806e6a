#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "snrilab/audio/melbank.hpp"
#include "snrilab/common/rng.hpp"
#include "snrilab/grad/tape.hpp"
#include "snrilab/metrics/metrics.hpp"

namespace snrilab::models {

// --- configs -----------------------------------------------------------------

struct SnriNetConfig {
  int encoder_basis = 64;  // D_e, encoder/decoder basis size
  int bottleneck = 48;     // D_b, width entering the temporal blocks
  double window_ms = 2.5;  // encoder filter length
  double hop_ms = 1.25;    // encoder stride
  int n_blocks = 3;
  int hidden = 48;         // width inside each gated block
  double zeta = 0.5;       // consistency split at the output
  // Conditioned nets concatenate the normalized improvement target to the
  // bottleneck per frame; unconditioned nets are the conventional frontend.
  bool conditioned = true;
  double lambda_min = 0.0;
  double lambda_max = 20.0;
  int sample_rate = 16000;

  int window_samples() const;
  int hop_samples() const;
  int block_width() const { return bottleneck + (conditioned ? 1 : 0); }
  void validate() const;
};

struct PredNetConfig {
  int n_blocks = 2;
  int hidden = 32;
  int n_mels = 32;
  double lambda_min = 0.0;
  double lambda_max = 20.0;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int sample_rate = 16000;

  void validate() const;
};

struct BackendConfig {
  int n_classes = 10;
  int n_blocks = 2;
  int hidden = 32;
  int n_mels = 32;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int sample_rate = 16000;

  void validate() const;
};

// --- differentiable feature front ---------------------------------------------

// frame -> fixed windowed-DFT matmul -> square/add -> mel projection + log.
// Numerically matches audio::logmel (same window, FFT size, filterbank).
class LogMelGraph {
 public:
  LogMelGraph(int n_mels, double window_ms, double hop_ms, int sample_rate);

  // wave: rank-1 tensor. Returns (frames, n_mels). Throws TooShort.
  grad::Tensor apply(grad::Tape& t, const grad::Tensor& wave) const;

  const audio::MelFilterbank& filterbank() const { return fb_; }
  int min_samples() const { return fb_.window_samples; }

 private:
  audio::MelFilterbank fb_;
  std::shared_ptr<std::vector<double>> dft_;    // (win, 2*n_bins), Hann folded in
  std::shared_ptr<const std::vector<double>> mel_w_;  // (n_mels, n_bins)
};

// --- parameter initialization ---------------------------------------------------
// Keys are "<group>/<name>"; groups: snri_net, pred_net, backend.

void init_snri_net(grad::Params& params, const SnriNetConfig& cfg, Rng& rng);
void init_pred_net(grad::Params& params, const PredNetConfig& cfg, Rng& rng);
void init_backend(grad::Params& params, const BackendConfig& cfg, Rng& rng);

// --- forward passes --------------------------------------------------------------

struct SeparatedTensors {
  grad::Tensor speech;  // estimate of s, same length as x
  grad::Tensor noise;   // estimate of n
};

// Mask-based enhancer. `lambda_db` is a scalar tensor for conditioned nets
// (pass stop_gradient(lambda) upstream to barrier it) and must be left
// undefined for unconditioned ones. Output satisfies speech + noise = x.
SeparatedTensors snri_net_forward(grad::Tape& t, const grad::Params& params,
                                  const SnriNetConfig& cfg, const grad::Tensor& x,
                                  const grad::Tensor& lambda_db);

// Scalar improvement target in [lambda_min, lambda_max] via scaled sigmoid
// over mean-pooled block features.
grad::Tensor pred_net_forward(grad::Tape& t, const grad::Params& params,
                              const PredNetConfig& cfg, const grad::Tensor& x,
                              const LogMelGraph& lm);

// Class log-probabilities (K,) from the differentiable log-mel of a waveform.
grad::Tensor backend_forward(grad::Tape& t, const grad::Params& params,
                             const BackendConfig& cfg, const grad::Tensor& wave,
                             const LogMelGraph& lm);

// Negative log-likelihood of the label under the given log-probabilities.
grad::Tensor task_loss(const grad::Tensor& log_probs, int label);

// --- differentiable losses --------------------------------------------------------

// -10*log10(||ref||^2 / (||est - ref||^2 + tau*||ref||^2)) on the tape.
grad::Tensor thresholded_snr_loss_graph(grad::Tape& t,
                                        const std::vector<double>& ref,
                                        const grad::Tensor& est, double tau);

// alpha-weighted two-sided separation loss.
grad::Tensor se_loss_graph(grad::Tape& t, const std::vector<double>& s,
                           const std::vector<double>& n,
                           const SeparatedTensors& y,
                           const metrics::ThresholdConfig& cfg);

struct SnriLossGraph {
  grad::Tensor total;      // |lambda - snri|^2 + beta * sar_loss
  grad::Tensor snri_term;  // squared error
  grad::Tensor sar_term;   // artifact loss
  double achieved_snri_db = 0.0;  // forward value (uncapped)
};

// Differentiable improvement-target loss. Unlike the evaluation kernel this
// has no cap at zero residual: the log simply diverges there, and the
// engine's finiteness check aborts the step.
SnriLossGraph snri_target_loss_graph(grad::Tape& t, const std::vector<double>& s,
                                     const std::vector<double>& n,
                                     const grad::Tensor& y1,
                                     const grad::Tensor& lambda_db,
                                     const metrics::ThresholdConfig& cfg);

// --- joint objective ----------------------------------------------------------------

enum class JointMode { proposed, baseline };

struct ModelSet {
  SnriNetConfig snri;
  PredNetConfig pred;
  BackendConfig backend;
  std::shared_ptr<LogMelGraph> pred_lm;
  std::shared_ptr<LogMelGraph> backend_lm;

  // Builds the feature graphs; call once after the configs are final.
  void build();
};

struct JointLossResult {
  grad::Tensor total;
  grad::Tensor task_term;
  grad::Tensor aux_term;        // improvement loss (proposed) or SE loss (baseline)
  double lambda_used_db = 0.0;  // value fed to the frontend (proposed only)
  double lambda_pred_db = 0.0;  // raw prediction before any substitution
  double achieved_snri_db = 0.0;
};

// Non-skip joint objective for one example.
//
// proposed: the prediction feeds the frontend unbarriered on the task path, so
// the task gradient reaches the predictor; the improvement loss is computed
// through a second frontend pass conditioned on stop_gradient(lambda), so that
// term contributes exactly zero to predictor parameters. `forced_lambda`
// implements the random-target substitution (prediction unused, predictor off
// the graph).
//
// baseline: unconditioned frontend, task loss plus gamma-weighted SE loss.
JointLossResult joint_loss(grad::Tape& t, const grad::Params& params,
                           const ModelSet& models, const std::vector<double>& x,
                           const std::vector<double>& s,
                           const std::vector<double>& n, int label,
                           JointMode mode, double eta, double gamma,
                           const metrics::ThresholdConfig& tcfg,
                           std::optional<double> forced_lambda = std::nullopt);

}  // namespace snrilab::models
