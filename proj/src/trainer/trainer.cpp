#include "snrilab/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "snrilab/audio/mixing.hpp"
#include "snrilab/common/errors.hpp"

namespace snrilab::trainer {

namespace {

constexpr int kAuditInterval = 100;  // stop-gradient audit cadence (steps)

void accumulate(grad::GradMap& total, const grad::GradMap& g) {
  for (const auto& [key, vec] : g) {
    auto it = total.find(key);
    if (it == total.end()) {
      total.emplace(key, vec);
    } else {
      auto& acc = it->second;
      for (std::size_t i = 0; i < vec.size(); ++i) acc[i] += vec[i];
    }
  }
}

double window_mean(const std::vector<double>& losses, bool from_end, int window) {
  const int n = static_cast<int>(losses.size());
  const int w = std::min(window, n);
  double sum = 0.0;
  const int begin = from_end ? n - w : 0;
  for (int i = begin; i < begin + w; ++i) sum += losses[static_cast<std::size_t>(i)];
  return w > 0 ? sum / w : 0.0;
}

const audio::CorpusEntry& pick(const std::vector<const audio::CorpusEntry*>& list,
                               Rng& rng) {
  return *list[static_cast<std::size_t>(rng.uniform_index(list.size()))];
}

double grad_group_norm(const grad::GradMap& grads, const std::string& prefix) {
  double sq = 0.0;
  for (const auto& [key, vec] : grads) {
    if (key.rfind(prefix, 0) != 0) continue;
    for (double v : vec) sq += v * v;
  }
  return std::sqrt(sq);
}

}  // namespace

// --- config / example ------------------------------------------------------------

void TrainConfig::validate() const {
  if (steps < 1) throw InvalidParams("steps must be >= 1");
  if (batch_size < 1) throw InvalidParams("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidParams("learning_rate must be positive");
  }
  if (!(finetune_lr_scale > 0.0) || !std::isfinite(finetune_lr_scale)) {
    throw InvalidParams("finetune_lr_scale must be positive");
  }
  for (double p : {skip_frontend_prob, random_lambda_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidParams("probabilities must lie in [0, 1]");
    }
  }
  if (!std::isfinite(eta) || !std::isfinite(gamma)) {
    throw InvalidParams("loss weights must be finite");
  }
  if (!(snr_min_db <= snr_max_db) || !std::isfinite(snr_min_db) ||
      !std::isfinite(snr_max_db)) {
    throw InvalidParams("snr range must be finite and non-empty");
  }
}

void TrainingExample::validate() const {
  if (x.size() != s.size() || x.size() != n.size()) {
    throw LengthMismatch("example buffers have different lengths");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(x.samples[i] - (s.samples[i] + n.samples[i])) > 1e-9) {
      throw InvalidParams("example mixture is not the sum of its parts");
    }
  }
  if (label < 0) throw InvalidLabel("example label is unset");
}

// --- run log ----------------------------------------------------------------------

RunLog::RunLog(const std::string& path) {
  out_ = std::make_unique<std::ofstream>(path);
  if (!*out_) throw IoError("cannot open run log '" + path + "'");
}

void RunLog::append(nlohmann::json record) {
  if (record.contains("step")) {
    const long long step = record.at("step").get<long long>();
    if (step <= last_step_) {
      throw InvalidParams("run log steps must strictly increase");
    }
    last_step_ = step;
  }
  if (out_) {
    *out_ << record.dump() << "\n";
    out_->flush();
  }
  records_.push_back(std::move(record));
}

// --- sampling helpers --------------------------------------------------------------

TrainingExample sample_example(const audio::CorpusManifest& corpus, Rng& rng,
                               double snr_lo_db, double snr_hi_db) {
  const auto speech = corpus.speech();
  const auto noise = corpus.noise();
  if (speech.empty()) throw EmptyCorpus("corpus has no speech entries");
  if (noise.empty()) throw EmptyCorpus("corpus has no noise entries");

  const audio::CorpusEntry& se = pick(speech, rng);
  const audio::CorpusEntry& ne = pick(noise, rng);
  const double snr = rng.uniform(snr_lo_db, snr_hi_db);

  TrainingExample ex;
  ex.s = audio::render_entry(se);
  audio::AudioBuffer raw_noise = audio::render_entry(ne);
  audio::MixResult mixed = audio::mix_at_snr(ex.s, raw_noise, snr);
  ex.x = std::move(mixed.mixture);
  ex.n = std::move(mixed.scaled_noise);
  ex.label = se.label;
  return ex;
}

double pretrain_lambda(std::uint64_t seed, int step, int example, double lo,
                       double hi) {
  Rng r = Rng(seed)
              .child("pretrain_snri_net")
              .child(static_cast<std::uint64_t>(step))
              .child("lambda")
              .child(static_cast<std::uint64_t>(example));
  return r.uniform(lo, hi);
}

FinetuneBranch finetune_branch(std::uint64_t seed, int step, double skip_prob,
                               double random_prob) {
  Rng r = Rng(seed)
              .child("finetune_joint")
              .child(static_cast<std::uint64_t>(step))
              .child("branch");
  const double u_skip = r.uniform();
  const double u_rand = r.uniform();
  if (u_skip < skip_prob) return FinetuneBranch::skip;
  if (u_rand < random_prob) return FinetuneBranch::random_lambda;
  return FinetuneBranch::predicted;
}

double finetune_random_lambda(std::uint64_t seed, int step, int example,
                              double lo, double hi) {
  Rng r = Rng(seed)
              .child("finetune_joint")
              .child(static_cast<std::uint64_t>(step))
              .child("lambda")
              .child(static_cast<std::uint64_t>(example));
  return r.uniform(lo, hi);
}

// --- pretraining -------------------------------------------------------------------

PretrainSnriResult pretrain_snri_net(const TrainConfig& cfg,
                                     const models::SnriNetConfig& mcfg,
                                     const metrics::ThresholdConfig& tcfg,
                                     const audio::CorpusManifest& corpus,
                                     RunLog* log) {
  cfg.validate();
  mcfg.validate();
  tcfg.validate();

  PretrainSnriResult out;
  Rng init_rng(cfg.seed);
  models::init_snri_net(out.params, mcfg, init_rng);

  grad::AdamConfig ac;
  ac.lr = cfg.learning_rate;
  grad::AdamState opt;

  const Rng run_rng = Rng(cfg.seed).child("pretrain_snri_net");
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 1; step <= cfg.steps; ++step) {
    const Rng step_rng = run_rng.child(static_cast<std::uint64_t>(step));
    grad::GradMap total;
    double loss_sum = 0.0, snri_sum = 0.0, sar_sum = 0.0;

    for (int i = 0; i < cfg.batch_size; ++i) {
      Rng ex_rng =
          step_rng.child("example").child(static_cast<std::uint64_t>(i));
      TrainingExample ex =
          sample_example(corpus, ex_rng, cfg.snr_min_db, cfg.snr_max_db);

      grad::Tape t;
      grad::Tensor x_t =
          t.constant({static_cast<int>(ex.x.size())}, ex.x.samples);
      grad::Tensor loss;
      if (mcfg.conditioned) {
        const double lam = pretrain_lambda(cfg.seed, step, i, mcfg.lambda_min,
                                           mcfg.lambda_max);
        grad::Tensor lam_t = t.scalar_const(lam);
        models::SeparatedTensors y =
            models::snri_net_forward(t, out.params, mcfg, x_t, lam_t);
        models::SnriLossGraph lg = models::snri_target_loss_graph(
            t, ex.s.samples, ex.n.samples, y.speech, lam_t, tcfg);
        loss = lg.total;
        snri_sum += lg.snri_term.scalar();
        sar_sum += lg.sar_term.scalar();
      } else {
        models::SeparatedTensors y =
            models::snri_net_forward(t, out.params, mcfg, x_t, grad::Tensor{});
        loss = models::se_loss_graph(t, ex.s.samples, ex.n.samples, y, tcfg);
      }
      loss_sum += loss.scalar();
      grad::GradMap g =
          t.backward(grad::affine(loss, 1.0 / cfg.batch_size, 0.0));
      accumulate(total, g);
    }

    grad::adam_step(out.params, total, opt, ac);
    const double mean_loss = loss_sum / cfg.batch_size;
    losses.push_back(mean_loss);
    if (log) {
      nlohmann::json rec{{"step", step},
                         {"loss", mean_loss},
                         {"lr", ac.lr}};
      if (mcfg.conditioned) {
        rec["snri_term"] = snri_sum / cfg.batch_size;
        rec["sar_term"] = sar_sum / cfg.batch_size;
      }
      log->append(std::move(rec));
    }
  }

  out.first_window_mean_loss = window_mean(losses, false, 100);
  out.last_window_mean_loss = window_mean(losses, true, 100);
  return out;
}

grad::Params pretrain_backend(const TrainConfig& cfg,
                              const models::BackendConfig& bcfg,
                              const audio::CorpusManifest& corpus, RunLog* log) {
  cfg.validate();
  bcfg.validate();

  grad::Params params;
  Rng init_rng(cfg.seed);
  models::init_backend(params, bcfg, init_rng);
  const models::LogMelGraph lm(bcfg.n_mels, bcfg.window_ms, bcfg.hop_ms,
                               bcfg.sample_rate);

  grad::AdamConfig ac;
  ac.lr = cfg.learning_rate;
  grad::AdamState opt;

  const Rng run_rng = Rng(cfg.seed).child("pretrain_backend");
  const auto speech = corpus.speech();
  if (speech.empty()) throw EmptyCorpus("corpus has no speech entries");

  for (int step = 1; step <= cfg.steps; ++step) {
    const Rng step_rng = run_rng.child(static_cast<std::uint64_t>(step));
    grad::GradMap total;
    double loss_sum = 0.0;
    int clean_count = 0;

    for (int i = 0; i < cfg.batch_size; ++i) {
      Rng ex_rng =
          step_rng.child("example").child(static_cast<std::uint64_t>(i));
      audio::AudioBuffer wave;
      int label = -1;
      if (ex_rng.bernoulli(0.5)) {
        const audio::CorpusEntry& se = pick(speech, ex_rng);
        wave = audio::render_entry(se);
        label = se.label;
        ++clean_count;
      } else {
        TrainingExample ex =
            sample_example(corpus, ex_rng, cfg.snr_min_db, cfg.snr_max_db);
        wave = std::move(ex.x);
        label = ex.label;
      }

      grad::Tape t;
      grad::Tensor w_t = t.constant({static_cast<int>(wave.size())}, wave.samples);
      grad::Tensor log_probs = models::backend_forward(t, params, bcfg, w_t, lm);
      grad::Tensor loss = models::task_loss(log_probs, label);
      loss_sum += loss.scalar();
      grad::GradMap g =
          t.backward(grad::affine(loss, 1.0 / cfg.batch_size, 0.0));
      accumulate(total, g);
    }

    grad::adam_step(params, total, opt, ac);
    if (log) {
      log->append(nlohmann::json{{"step", step},
                                 {"loss", loss_sum / cfg.batch_size},
                                 {"clean_in_batch", clean_count},
                                 {"lr", ac.lr}});
    }
  }
  return params;
}

// --- joint fine-tune ---------------------------------------------------------------

FinetuneResult finetune_joint(const TrainConfig& cfg, const models::ModelSet& ms,
                              const metrics::ThresholdConfig& tcfg,
                              const grad::Params& start,
                              const audio::CorpusManifest& corpus,
                              models::JointMode mode, RunLog* log) {
  cfg.validate();
  tcfg.validate();
  if (!ms.backend_lm) throw InvalidParams("ModelSet::build() was not called");
  if (mode == models::JointMode::proposed && !ms.snri.conditioned) {
    throw InvalidParams("proposed fine-tune needs a conditioned frontend");
  }
  if (mode == models::JointMode::baseline && ms.snri.conditioned) {
    throw InvalidParams("baseline fine-tune uses an unconditioned frontend");
  }

  // Assemble the working parameter set: frontend and backend must come from
  // `start` with matching shapes; a missing predictor starts fresh.
  grad::Params expected;
  Rng init_rng(cfg.seed);
  models::init_snri_net(expected, ms.snri, init_rng);
  models::init_backend(expected, ms.backend, init_rng);
  const bool need_pred = mode == models::JointMode::proposed;
  if (need_pred) models::init_pred_net(expected, ms.pred, init_rng);
  bool start_has_pred = false;
  for (const auto& [key, p] : start) {
    if (key.rfind("pred_net/", 0) == 0) start_has_pred = true;
  }

  FinetuneResult out;
  for (const auto& [key, p] : expected) {
    auto it = start.find(key);
    if (it == start.end()) {
      if (!start_has_pred && key.rfind("pred_net/", 0) == 0) {
        out.params[key] = p;  // fresh predictor
        continue;
      }
      throw IncompatibleCheckpoint("missing parameter '" + key + "'");
    }
    if (it->second.shape != p.shape) {
      throw IncompatibleCheckpoint(
          "shape mismatch for '" + key + "': checkpoint " +
          grad::shape_to_string(it->second.shape) + ", model " +
          grad::shape_to_string(p.shape));
    }
    out.params[key] = it->second;
  }

  grad::AdamConfig ac;
  ac.lr = cfg.learning_rate * cfg.finetune_lr_scale;
  grad::AdamState opt;
  if (log) {
    log->append(nlohmann::json{
        {"event", "finetune_config"},
        {"mode", mode == models::JointMode::proposed ? "proposed" : "baseline"},
        {"base_lr", cfg.learning_rate},
        {"lr_scale", cfg.finetune_lr_scale},
        {"lr", ac.lr}});
  }

  const Rng run_rng = Rng(cfg.seed).child("finetune_joint");

  for (int step = 1; step <= cfg.steps; ++step) {
    const Rng step_rng = run_rng.child(static_cast<std::uint64_t>(step));
    const FinetuneBranch branch =
        mode == models::JointMode::baseline
            ? finetune_branch(cfg.seed, step, 0.5, 0.0)
            : finetune_branch(cfg.seed, step, cfg.skip_frontend_prob,
                              cfg.random_lambda_prob);
    if (branch == FinetuneBranch::skip) ++out.skip_steps;
    if (branch == FinetuneBranch::random_lambda) ++out.random_lambda_steps;

    grad::GradMap total;
    double loss_sum = 0.0, task_sum = 0.0, aux_sum = 0.0, lambda_sum = 0.0;
    bool has_aux = false, has_lambda = false;

    for (int i = 0; i < cfg.batch_size; ++i) {
      Rng ex_rng =
          step_rng.child("example").child(static_cast<std::uint64_t>(i));
      TrainingExample ex =
          sample_example(corpus, ex_rng, cfg.snr_min_db, cfg.snr_max_db);

      grad::Tape t;
      grad::Tensor loss;
      if (branch == FinetuneBranch::skip) {
        // Bypass frontend (and predictor): the classifier sees the mixture,
        // and with no enhanced signal there is no improvement term.
        grad::Tensor x_t =
            t.constant({static_cast<int>(ex.x.size())}, ex.x.samples);
        grad::Tensor log_probs = models::backend_forward(
            t, out.params, ms.backend, x_t, *ms.backend_lm);
        loss = models::task_loss(log_probs, ex.label);
        task_sum += loss.scalar();
      } else {
        std::optional<double> forced;
        if (branch == FinetuneBranch::random_lambda) {
          forced = finetune_random_lambda(cfg.seed, step, i, ms.pred.lambda_min,
                                          ms.pred.lambda_max);
        }
        models::JointLossResult r = models::joint_loss(
            t, out.params, ms, ex.x.samples, ex.s.samples, ex.n.samples,
            ex.label, mode, cfg.eta, cfg.gamma, tcfg, forced);
        loss = r.total;
        task_sum += r.task_term.scalar();
        aux_sum += r.aux_term.scalar();
        has_aux = true;
        if (mode == models::JointMode::proposed &&
            branch == FinetuneBranch::predicted) {
          lambda_sum += r.lambda_pred_db;
          has_lambda = true;
        }
      }
      loss_sum += loss.scalar();
      grad::GradMap g =
          t.backward(grad::affine(loss, 1.0 / cfg.batch_size, 0.0));
      accumulate(total, g);
    }

    grad::adam_step(out.params, total, opt, ac);

    if (log) {
      nlohmann::json rec{
          {"step", step},
          {"branch", branch == FinetuneBranch::skip           ? "skip"
                     : branch == FinetuneBranch::random_lambda ? "random_lambda"
                                                               : "predicted"},
          {"loss", loss_sum / cfg.batch_size},
          {"task_term", task_sum / cfg.batch_size},
          {"lr", ac.lr}};
      if (has_aux) rec["aux_term"] = aux_sum / cfg.batch_size;
      if (has_lambda) rec["lambda_pred_mean"] = lambda_sum / cfg.batch_size;
      log->append(std::move(rec));
    }

    // Stop-gradient audit: the improvement term alone must put exactly zero
    // gradient on predictor parameters.
    if (mode == models::JointMode::proposed &&
        (step == 1 || step % kAuditInterval == 0)) {
      Rng audit_rng = step_rng.child("audit");
      TrainingExample ex =
          sample_example(corpus, audit_rng, cfg.snr_min_db, cfg.snr_max_db);
      grad::Tape t;
      grad::Tensor x_t =
          t.constant({static_cast<int>(ex.x.size())}, ex.x.samples);
      grad::Tensor lam =
          models::pred_net_forward(t, out.params, ms.pred, x_t, *ms.pred_lm);
      grad::Tensor lam_sg = grad::stop_gradient(lam);
      models::SeparatedTensors y =
          models::snri_net_forward(t, out.params, ms.snri, x_t, lam_sg);
      models::SnriLossGraph lg = models::snri_target_loss_graph(
          t, ex.s.samples, ex.n.samples, y.speech, lam_sg, tcfg);
      grad::GradMap g = t.backward(grad::affine(lg.total, cfg.eta, 0.0));
      const double norm = grad_group_norm(g, "pred_net/");
      out.max_audit_pred_grad = std::max(out.max_audit_pred_grad, norm);
      ++out.audits;
      if (log) {
        log->append(nlohmann::json{{"event", "stop_gradient_audit"},
                                   {"at_step", step},
                                   {"pred_grad_norm", norm}});
      }
    }
  }
  return out;
}

// --- evaluation helpers --------------------------------------------------------------

std::vector<TrainingExample> make_eval_examples(const audio::CorpusManifest& corpus,
                                                int count, double snr_db,
                                                std::uint64_t seed) {
  if (count < 1) throw InvalidParams("eval example count must be >= 1");
  const Rng base = Rng(seed).child("heldout");
  std::vector<TrainingExample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Rng ex_rng = base.child(static_cast<std::uint64_t>(k));
    out.push_back(sample_example(corpus, ex_rng, snr_db, snr_db));
  }
  return out;
}

double mean_task_loss(const grad::Params& params, const models::ModelSet& ms,
                      const std::vector<TrainingExample>& examples,
                      EvalPipeline pipeline) {
  if (examples.empty()) throw InvalidParams("no evaluation examples");
  if (!ms.backend_lm) throw InvalidParams("ModelSet::build() was not called");
  double sum = 0.0;
  for (const TrainingExample& ex : examples) {
    grad::Tape t;
    grad::Tensor x_t = t.constant({static_cast<int>(ex.x.size())}, ex.x.samples);
    grad::Tensor wave = x_t;
    if (pipeline == EvalPipeline::proposed) {
      grad::Tensor lam =
          models::pred_net_forward(t, params, ms.pred, x_t, *ms.pred_lm);
      wave = models::snri_net_forward(t, params, ms.snri, x_t, lam).speech;
    } else if (pipeline == EvalPipeline::baseline) {
      wave =
          models::snri_net_forward(t, params, ms.snri, x_t, grad::Tensor{}).speech;
    }
    grad::Tensor log_probs =
        models::backend_forward(t, params, ms.backend, wave, *ms.backend_lm);
    sum += models::task_loss(log_probs, ex.label).scalar();
  }
  return sum / static_cast<double>(examples.size());
}

int backend_predict(const grad::Params& params, const models::BackendConfig& bcfg,
                    const models::LogMelGraph& lm, const std::vector<double>& wave) {
  grad::Tape t;
  grad::Tensor w_t = t.constant({static_cast<int>(wave.size())}, wave);
  grad::Tensor log_probs = models::backend_forward(t, params, bcfg, w_t, lm);
  const std::vector<double>& v = log_probs.values();
  int best = 0;
  for (int k = 1; k < static_cast<int>(v.size()); ++k) {
    if (v[static_cast<std::size_t>(k)] > v[static_cast<std::size_t>(best)]) {
      best = k;
    }
  }
  return best;
}

}  // namespace snrilab::trainer
