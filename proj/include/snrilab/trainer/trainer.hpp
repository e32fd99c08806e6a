#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snrilab/audio/corpus.hpp"
#include "snrilab/grad/adam.hpp"
#include "snrilab/models/models.hpp"

namespace snrilab::trainer {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double finetune_lr_scale = 0.1;
  double skip_frontend_prob = 0.05;   // joint fine-tune: bypass both nets
  double random_lambda_prob = 0.25;   // joint fine-tune: substitute the prediction
  double eta = 0.01;                  // weight of the improvement loss (proposed)
  double gamma = 0.25;                // weight of the SE loss (baseline)
  std::uint64_t seed = 1;
  double snr_min_db = -10.0;
  double snr_max_db = 30.0;

  void validate() const;
};

struct TrainingExample {
  audio::AudioBuffer x;  // mixture, exactly s + n
  audio::AudioBuffer s;
  audio::AudioBuffer n;
  std::optional<double> lambda_db;
  int label = -1;

  void validate() const;  // x = s + n within 1e-9, lengths equal
};

// Step-by-step JSON-lines journal. Step numbers must strictly increase;
// records without a "step" field (headers, summaries) are always accepted.
class RunLog {
 public:
  RunLog() = default;                       // in-memory only
  explicit RunLog(const std::string& path); // also appends lines to `path`

  void append(nlohmann::json record);
  const std::vector<nlohmann::json>& records() const { return records_; }

 private:
  std::vector<nlohmann::json> records_;
  std::unique_ptr<std::ofstream> out_;
  long long last_step_ = -1;
};

// --- deterministic sampling helpers (the exact streams the loops consume) ---

// Mixture example: uniform speech/noise picks, SNR ~ U[lo, hi].
TrainingExample sample_example(const audio::CorpusManifest& corpus, Rng& rng,
                               double snr_lo_db, double snr_hi_db);

// Improvement target fed to the conditioned frontend during pretraining.
double pretrain_lambda(std::uint64_t seed, int step, int example, double lo,
                       double hi);

enum class FinetuneBranch { skip, random_lambda, predicted };

// Per-step curriculum decision for the joint fine-tune.
FinetuneBranch finetune_branch(std::uint64_t seed, int step, double skip_prob,
                               double random_prob);

// Per-example substituted target on random_lambda steps.
double finetune_random_lambda(std::uint64_t seed, int step, int example,
                              double lo, double hi);

// --- procedures ---------------------------------------------------------------

struct PretrainSnriResult {
  grad::Params params;
  double first_window_mean_loss = 0.0;  // mean loss over the first 100 steps
  double last_window_mean_loss = 0.0;   // mean loss over the last 100 steps
};

// Trains the frontend from scratch. Conditioned configs minimize the
// improvement-target loss under per-example lambda ~ U(lambda_min, lambda_max);
// unconditioned configs minimize the alpha-weighted SE loss (the conventional
// frontend used by the post-mixing baseline).
PretrainSnriResult pretrain_snri_net(const TrainConfig& cfg,
                                     const models::SnriNetConfig& mcfg,
                                     const metrics::ThresholdConfig& tcfg,
                                     const audio::CorpusManifest& corpus,
                                     RunLog* log);

// Trains the classifier on a 50/50 stream of clean utterances and mixtures.
grad::Params pretrain_backend(const TrainConfig& cfg,
                              const models::BackendConfig& bcfg,
                              const audio::CorpusManifest& corpus, RunLog* log);

struct FinetuneResult {
  grad::Params params;
  int skip_steps = 0;
  int random_lambda_steps = 0;
  int audits = 0;
  // Max improvement-term gradient norm seen on predictor parameters across
  // audits; the stop-gradient rule makes this exactly zero.
  double max_audit_pred_grad = 0.0;
};

// Joint fine-tune at learning_rate * finetune_lr_scale. `start` must hold
// compatible snri_net and backend groups; in proposed mode a missing pred_net
// group is initialized fresh. Baseline mode ignores skip/random lambda
// settings and bypasses the frontend with probability 0.5.
FinetuneResult finetune_joint(const TrainConfig& cfg, const models::ModelSet& ms,
                              const metrics::ThresholdConfig& tcfg,
                              const grad::Params& start,
                              const audio::CorpusManifest& corpus,
                              models::JointMode mode, RunLog* log);

// --- evaluation helpers ---------------------------------------------------------

// Deterministic held-out mixtures at a fixed input SNR (seed-split from the
// training streams).
std::vector<TrainingExample> make_eval_examples(const audio::CorpusManifest& corpus,
                                                int count, double snr_db,
                                                std::uint64_t seed);

// Mean task loss of the deployed pipeline: proposed runs predictor -> frontend
// -> backend; baseline runs frontend -> backend; `raw` feeds x directly.
enum class EvalPipeline { proposed, baseline, raw };
double mean_task_loss(const grad::Params& params, const models::ModelSet& ms,
                      const std::vector<TrainingExample>& examples,
                      EvalPipeline pipeline);

// Argmax class for one waveform under the backend alone.
int backend_predict(const grad::Params& params, const models::BackendConfig& bcfg,
                    const models::LogMelGraph& lm, const std::vector<double>& wave);

}  // namespace snrilab::trainer
