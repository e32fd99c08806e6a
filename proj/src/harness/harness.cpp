#include "snrilab/harness/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "snrilab/audio/mixing.hpp"
#include "snrilab/audio/wav.hpp"
#include "snrilab/common/errors.hpp"
#include "snrilab/grad/checkpoint.hpp"
#include "snrilab/grad/grad_check.hpp"

namespace snrilab::harness {

namespace {

using nlohmann::json;

constexpr double kZ99 = 2.5758293035489;  // two-sided 99% normal quantile
constexpr double kClipGuardPeak = 0.99;   // joint rescale threshold before PCM16

audio::AudioBuffer quantize_buffer(const audio::AudioBuffer& b) {
  audio::AudioBuffer out;
  out.sample_rate = b.sample_rate;
  out.samples.resize(b.samples.size());
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    out.samples[i] = audio::pcm16_quantize(b.samples[i]);
  }
  return out;
}

// Scales x, s, n by the same factor when any would clip, preserving both
// x = s + n and the mixture SNR.
double joint_clip_guard(audio::AudioBuffer& x, audio::AudioBuffer& s,
                        audio::AudioBuffer& n) {
  double peak = 0.0;
  for (const auto* b : {&x, &s, &n}) {
    peak = std::max(peak, audio::peak_abs(*b));
  }
  if (peak <= kClipGuardPeak) return 1.0;
  const double scale = kClipGuardPeak / peak;
  for (auto* b : {&x, &s, &n}) {
    for (double& v : b->samples) v *= scale;
  }
  return scale;
}

void parallel_for(int n_tasks, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n_tasks <= 1) {
    for (int i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min(threads, n_tasks);
  pool.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string utterance_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "utt%04d", index);
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

metrics::SeparatedPair run_frontend(const grad::Params& params,
                                    const models::SnriNetConfig& cfg,
                                    const audio::AudioBuffer& x,
                                    std::optional<double> lambda_db) {
  grad::Tape t;
  grad::Tensor x_t = t.constant({static_cast<int>(x.size())}, x.samples);
  grad::Tensor lam;
  if (lambda_db.has_value()) lam = t.scalar_const(*lambda_db);
  models::SeparatedTensors y = models::snri_net_forward(t, params, cfg, x_t, lam);
  metrics::SeparatedPair out;
  out.speech = audio::AudioBuffer{y.speech.values(), x.sample_rate};
  out.noise = audio::AudioBuffer{y.noise.values(), x.sample_rate};
  return out;
}

}  // namespace

// --- shared utilities -----------------------------------------------------------

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SNRI_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 1024) {
      return static_cast<int>(v);
    }
    throw InvalidParams("SNRI_LAB_THREADS must be an integer in [1, 1024]");
  }
  return 1;
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

SummaryStats summarize(const std::vector<double>& values) {
  if (values.empty()) throw InvalidParams("cannot summarize zero values");
  SummaryStats s;
  s.n = static_cast<int>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / s.n;
  if (s.n == 1) {
    s.ci_lo = s.ci_hi = s.mean;
    return s;
  }
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  const double sd = std::sqrt(sq / (s.n - 1));
  const double half = kZ99 * sd / std::sqrt(static_cast<double>(s.n));
  s.ci_lo = s.mean - half;
  s.ci_hi = s.mean + half;
  return s;
}

// --- checkpoints ------------------------------------------------------------------

void save_model_checkpoint(const std::filesystem::path& path,
                           const grad::Params& params, const json& meta) {
  grad::save_checkpoint(path, params, meta);
}

grad::Checkpoint load_model_checkpoint(const std::filesystem::path& path,
                                       const std::string& network) {
  grad::Checkpoint ck = grad::load_checkpoint(path);
  const auto it = ck.meta.find("network");
  if (it == ck.meta.end() || !it->is_string()) {
    throw IncompatibleCheckpoint("checkpoint '" + path.string() +
                                 "' has no network tag");
  }
  if (it->get<std::string>() != network) {
    throw IncompatibleCheckpoint("checkpoint '" + path.string() + "' holds '" +
                                 it->get<std::string>() + "', expected '" +
                                 network + "'");
  }
  return ck;
}

models::ModelSet model_set_from_meta(const json& meta) {
  models::ModelSet ms;
  if (meta.contains("configs")) {
    const json& c = meta.at("configs");
    if (c.contains("snri_net")) {
      ms.snri = snri_net_config_from_json(c.at("snri_net"));
    }
    if (c.contains("pred_net")) {
      ms.pred = pred_net_config_from_json(c.at("pred_net"));
    }
    if (c.contains("backend")) {
      ms.backend = backend_config_from_json(c.at("backend"));
    }
  }
  ms.build();
  return ms;
}

// --- mixture sets -----------------------------------------------------------------

std::vector<EvalMixture> make_eval_mixtures(const audio::CorpusManifest& corpus,
                                            double input_snr_db, int count,
                                            std::uint64_t seed,
                                            const std::string& noise_kind) {
  if (count < 1) throw InvalidParams("mixture count must be >= 1");
  if (!std::isfinite(input_snr_db)) {
    throw InvalidParams("input snr must be finite");
  }
  const auto speech = corpus.speech();
  std::vector<const audio::CorpusEntry*> noise;
  for (const audio::CorpusEntry* e : corpus.noise()) {
    if (noise_kind.empty() || e->noise_kind == noise_kind) noise.push_back(e);
  }
  if (speech.empty()) throw EmptyCorpus("corpus has no speech entries");
  if (noise.empty()) {
    throw EmptyCorpus(noise_kind.empty()
                          ? "corpus has no noise entries"
                          : "corpus has no '" + noise_kind + "' noise entries");
  }

  const Rng base = Rng(seed).child("eval_mix").child(
      noise_kind.empty() ? std::string_view("any") : std::string_view(noise_kind));
  std::vector<EvalMixture> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int u = 0; u < count; ++u) {
    // Utterance picks do not depend on the SNR, so the same test signals are
    // re-adjusted across input conditions.
    Rng rng = base.child(static_cast<std::uint64_t>(u));
    const audio::CorpusEntry& se =
        *speech[static_cast<std::size_t>(rng.uniform_index(speech.size()))];
    const audio::CorpusEntry& ne =
        *noise[static_cast<std::size_t>(rng.uniform_index(noise.size()))];

    EvalMixture m;
    m.s = audio::render_entry(se);
    audio::AudioBuffer raw_noise = audio::render_entry(ne);
    audio::MixResult mixed = audio::mix_at_snr(m.s, raw_noise, input_snr_db);
    m.x = std::move(mixed.mixture);
    m.n = std::move(mixed.scaled_noise);
    joint_clip_guard(m.x, m.s, m.n);
    // Quantize the parts, then form the mixture as their sum: both addends
    // sit on the PCM16 grid and the clip guard keeps the sum in range, so
    // x = s + n holds exactly for the stored signals.
    m.s = quantize_buffer(m.s);
    m.n = quantize_buffer(m.n);
    for (std::size_t i = 0; i < m.x.samples.size(); ++i) {
      m.x.samples[i] = m.s.samples[i] + m.n.samples[i];
    }
    m.nominal_snr_db = input_snr_db;
    m.measured_snr_db = metrics::snr(m.s.samples, m.n.samples);
    m.utterance_id = utterance_name(u);
    m.speech_id = se.id;
    m.noise_id = ne.id;
    out.push_back(std::move(m));
  }
  return out;
}

void cmd_mix(const MixArgs& args) {
  const audio::CorpusManifest corpus = audio::CorpusManifest::load(args.manifest_path);
  if (!(args.snr_min_db <= args.snr_max_db)) {
    throw InvalidParams("mix snr range is empty");
  }
  if (args.count < 1) throw InvalidParams("mix count must be >= 1");
  const auto speech = corpus.speech();
  const auto noise = corpus.noise();
  if (speech.empty()) throw EmptyCorpus("corpus has no speech entries");
  if (noise.empty()) throw EmptyCorpus("corpus has no noise entries");

  std::filesystem::create_directories(args.out_dir);
  json entries = json::array();
  const Rng base = Rng(args.seed).child("mix");
  for (int k = 0; k < args.count; ++k) {
    Rng rng = base.child(static_cast<std::uint64_t>(k));
    const audio::CorpusEntry& se =
        *speech[static_cast<std::size_t>(rng.uniform_index(speech.size()))];
    const audio::CorpusEntry& ne =
        *noise[static_cast<std::size_t>(rng.uniform_index(noise.size()))];
    const double requested = rng.uniform(args.snr_min_db, args.snr_max_db);

    audio::AudioBuffer s = audio::render_entry(se);
    audio::AudioBuffer raw_noise = audio::render_entry(ne);
    audio::MixResult mixed = audio::mix_at_snr(s, raw_noise, requested);
    audio::AudioBuffer x = std::move(mixed.mixture);
    audio::AudioBuffer n = std::move(mixed.scaled_noise);
    const double scale = joint_clip_guard(x, s, n);
    // Quantize the parts and store their exact on-grid sum as the mixture,
    // so x = s + n holds bit-exactly for the files (see make_eval_mixtures).
    s = quantize_buffer(s);
    n = quantize_buffer(n);
    for (std::size_t i = 0; i < x.samples.size(); ++i) {
      x.samples[i] = s.samples[i] + n.samples[i];
    }

    char id[16];
    std::snprintf(id, sizeof(id), "mix%04d", k);
    const std::string x_name = std::string(id) + "_x.wav";
    const std::string s_name = std::string(id) + "_s.wav";
    const std::string n_name = std::string(id) + "_n.wav";
    audio::wav_write(args.out_dir / x_name, x);
    audio::wav_write(args.out_dir / s_name, s);
    audio::wav_write(args.out_dir / n_name, n);

    // Indexed SNR is measured on the stored (quantized) pair: re-reading the
    // files and running the snr oracle reproduces it exactly.
    entries.push_back(json{{"id", id},
                           {"speech_id", se.id},
                           {"noise_id", ne.id},
                           {"requested_snr_db", requested},
                           {"input_snr_db", metrics::snr(s.samples, n.samples)},
                           {"scale", scale},
                           {"mixture", x_name},
                           {"speech", s_name},
                           {"noise", n_name}});
  }

  json index{{"schema_version", 1},
             {"sample_rate", corpus.sample_rate},
             {"count", args.count},
             {"snr_min_db", args.snr_min_db},
             {"snr_max_db", args.snr_max_db},
             {"seed", args.seed},
             {"entries", std::move(entries)}};
  write_text_file(args.out_dir / "index.json", index.dump(2) + "\n");
}

// --- control-accuracy evaluation ----------------------------------------------------

namespace {

struct ControlRow {
  std::string method;
  double input_snr_db = 0.0;
  double target_db = 0.0;
  double achieved_db = 0.0;
  std::string utterance_id;
};

}  // namespace

EvalControlPaths eval_control(const EvalControlArgs& args, Enhancer conditioned,
                              Enhancer separator) {
  if (args.targets.empty() || args.input_snrs.empty()) {
    throw InvalidParams("eval-control needs targets and input snrs");
  }
  if (args.utterances < 1) throw InvalidParams("utterances must be >= 1");
  const audio::CorpusManifest corpus =
      audio::CorpusManifest::load(args.manifest_path);
  std::filesystem::create_directories(args.out_dir);

  // Same utterances across every cell of one input-SNR condition.
  std::vector<std::vector<EvalMixture>> mixtures;
  mixtures.reserve(args.input_snrs.size());
  for (double snr : args.input_snrs) {
    mixtures.push_back(
        make_eval_mixtures(corpus, snr, args.utterances, args.seed));
  }

  struct Task {
    int method;  // 0 = snri_net, 1 = postmix
    int snr_index;
    int target_index;
    int utt;
  };
  std::vector<Task> tasks;
  for (int method = 0; method < 2; ++method) {
    for (int si = 0; si < static_cast<int>(args.input_snrs.size()); ++si) {
      for (int ti = 0; ti < static_cast<int>(args.targets.size()); ++ti) {
        for (int u = 0; u < args.utterances; ++u) {
          tasks.push_back(Task{method, si, ti, u});
        }
      }
    }
  }

  std::vector<ControlRow> rows(tasks.size());
  const int threads = resolve_threads(args.threads);
  parallel_for(static_cast<int>(tasks.size()), threads, [&](int i) {
    const Task& task = tasks[static_cast<std::size_t>(i)];
    const EvalMixture& m =
        mixtures[static_cast<std::size_t>(task.snr_index)]
                [static_cast<std::size_t>(task.utt)];
    const double target = args.targets[static_cast<std::size_t>(task.target_index)];
    const char* method = task.method == 0 ? "snri_net" : "postmix";

    audio::AudioBuffer y;
    if (task.method == 0) {
      y = conditioned(m, target).speech;
    } else {
      y = metrics::postmix_control(separator(m, target), target);
    }
    const audio::AudioBuffer yq = quantize_buffer(y);
    const double achieved = metrics::snri(m.s.samples, m.n.samples, yq.samples);

    const std::filesystem::path cell_dir =
        args.out_dir / "wav" / method /
        ("snr_" + format_value(m.nominal_snr_db)) /
        ("target_" + format_value(target));
    std::filesystem::create_directories(cell_dir);
    audio::wav_write(cell_dir / (m.utterance_id + "_s.wav"), m.s);
    audio::wav_write(cell_dir / (m.utterance_id + "_n.wav"), m.n);
    audio::wav_write(cell_dir / (m.utterance_id + "_y.wav"), yq);

    rows[static_cast<std::size_t>(i)] =
        ControlRow{method, m.nominal_snr_db, target, achieved, m.utterance_id};
  });

  std::sort(rows.begin(), rows.end(), [](const ControlRow& a, const ControlRow& b) {
    return std::tie(a.method, a.input_snr_db, a.target_db, a.utterance_id) <
           std::tie(b.method, b.input_snr_db, b.target_db, b.utterance_id);
  });

  std::string per_utt = "method,input_snr_db,target_snri_db,achieved_snri_db,utterance_id\n";
  for (const ControlRow& r : rows) {
    per_utt += r.method + "," + format_value(r.input_snr_db) + "," +
               format_value(r.target_db) + "," + format_value(r.achieved_db) +
               "," + r.utterance_id + "\n";
  }

  std::map<std::tuple<std::string, double, double>, std::vector<double>> cells;
  for (const ControlRow& r : rows) {
    cells[{r.method, r.input_snr_db, r.target_db}].push_back(r.achieved_db);
  }
  std::string summary = "method,input_snr_db,target_snri_db,mean_db,ci99_lo_db,ci99_hi_db\n";
  for (const auto& [key, values] : cells) {
    const SummaryStats s = summarize(values);
    summary += std::get<0>(key) + "," + format_value(std::get<1>(key)) + "," +
               format_value(std::get<2>(key)) + "," + format_value(s.mean) +
               "," + format_value(s.ci_lo) + "," + format_value(s.ci_hi) + "\n";
  }

  EvalControlPaths paths;
  paths.per_utterance_csv = args.out_dir / "eval_control.csv";
  paths.summary_csv = args.out_dir / "eval_control_summary.csv";
  write_text_file(paths.per_utterance_csv, per_utt);
  write_text_file(paths.summary_csv, summary);
  return paths;
}

EvalControlPaths cmd_eval_control(const EvalControlArgs& args) {
  const grad::Checkpoint cond_ck =
      load_model_checkpoint(args.ckpt_path, "snri_net");
  const models::ModelSet cond_ms = model_set_from_meta(cond_ck.meta);
  if (!cond_ms.snri.conditioned) {
    throw IncompatibleCheckpoint(
        "--ckpt must hold a conditioned frontend (got unconditioned)");
  }
  const grad::Checkpoint base_ck =
      load_model_checkpoint(args.baseline_ckpt_path, "snri_net");
  const models::ModelSet base_ms = model_set_from_meta(base_ck.meta);
  if (base_ms.snri.conditioned) {
    throw IncompatibleCheckpoint(
        "--baseline-ckpt must hold an unconditioned frontend");
  }

  Enhancer conditioned = [params = cond_ck.params, cfg = cond_ms.snri](
                             const EvalMixture& m, double lambda_db) {
    return run_frontend(params, cfg, m.x, lambda_db);
  };
  Enhancer separator = [params = base_ck.params, cfg = base_ms.snri](
                           const EvalMixture& m, double) {
    return run_frontend(params, cfg, m.x, std::nullopt);
  };
  return eval_control(args, std::move(conditioned), std::move(separator));
}

// --- predicted-target analysis -------------------------------------------------------

EvalLambdaPaths cmd_eval_lambda(const EvalLambdaArgs& args) {
  if (args.noise_kinds.empty() || args.input_snrs.empty()) {
    throw InvalidParams("eval-lambda needs noise kinds and input snrs");
  }
  if (args.utterances < 1) throw InvalidParams("utterances must be >= 1");
  const grad::Checkpoint ck = load_model_checkpoint(args.ckpt_path, "joint");
  const models::ModelSet ms = model_set_from_meta(ck.meta);
  if (!ms.snri.conditioned) {
    throw IncompatibleCheckpoint("joint checkpoint frontend is unconditioned");
  }
  const audio::CorpusManifest corpus =
      audio::CorpusManifest::load(args.manifest_path);
  std::filesystem::create_directories(args.out_dir);

  struct Cell {
    std::string kind;
    double snr;
    std::vector<EvalMixture> mixtures;
  };
  std::vector<Cell> cells;
  for (const std::string& kind : args.noise_kinds) {
    for (double snr : args.input_snrs) {
      cells.push_back(
          Cell{kind, snr,
               make_eval_mixtures(corpus, snr, args.utterances, args.seed, kind)});
    }
  }

  struct LambdaRow {
    std::string kind;
    double snr = 0.0;
    double lambda_hat = 0.0;
    double achieved = 0.0;
    std::string utterance_id;
  };
  std::vector<LambdaRow> rows(cells.size() * static_cast<std::size_t>(args.utterances));
  const int threads = resolve_threads(args.threads);
  const int n_tasks = static_cast<int>(rows.size());
  parallel_for(n_tasks, threads, [&](int i) {
    const Cell& cell = cells[static_cast<std::size_t>(i / args.utterances)];
    const EvalMixture& m =
        cell.mixtures[static_cast<std::size_t>(i % args.utterances)];

    grad::Tape t;
    grad::Tensor x_t = t.constant({static_cast<int>(m.x.size())}, m.x.samples);
    grad::Tensor lam =
        models::pred_net_forward(t, ck.params, ms.pred, x_t, *ms.pred_lm);
    models::SeparatedTensors y =
        models::snri_net_forward(t, ck.params, ms.snri, x_t, lam);
    audio::AudioBuffer y1{y.speech.values(), m.x.sample_rate};
    const audio::AudioBuffer yq = quantize_buffer(y1);
    rows[static_cast<std::size_t>(i)] =
        LambdaRow{cell.kind, cell.snr, lam.scalar(),
                  metrics::snri(m.s.samples, m.n.samples, yq.samples),
                  m.utterance_id};
  });

  std::sort(rows.begin(), rows.end(), [](const LambdaRow& a, const LambdaRow& b) {
    return std::tie(a.kind, a.snr, a.utterance_id) <
           std::tie(b.kind, b.snr, b.utterance_id);
  });

  std::string csv = "noise_kind,input_snr_db,lambda_hat_db,achieved_snri_db,utterance_id\n";
  for (const LambdaRow& r : rows) {
    csv += r.kind + "," + format_value(r.snr) + "," + format_value(r.lambda_hat) +
           "," + format_value(r.achieved) + "," + r.utterance_id + "\n";
  }

  // Per-cell means plus the soft expectations, flagged but never hard-gated.
  std::map<std::pair<std::string, double>, std::vector<double>> lam_by_cell;
  std::map<std::pair<std::string, double>, std::vector<double>> snri_by_cell;
  double lam_min_seen = rows.front().lambda_hat, lam_max_seen = rows.front().lambda_hat;
  for (const LambdaRow& r : rows) {
    lam_by_cell[{r.kind, r.snr}].push_back(r.lambda_hat);
    snri_by_cell[{r.kind, r.snr}].push_back(r.achieved);
    lam_min_seen = std::min(lam_min_seen, r.lambda_hat);
    lam_max_seen = std::max(lam_max_seen, r.lambda_hat);
  }
  json cells_json = json::array();
  for (const auto& [key, lams] : lam_by_cell) {
    cells_json.push_back(
        json{{"noise_kind", key.first},
             {"input_snr_db", key.second},
             {"mean_lambda_hat_db", summarize(lams).mean},
             {"mean_achieved_snri_db", summarize(snri_by_cell.at(key)).mean},
             {"n", static_cast<int>(lams.size())}});
  }

  json expectations = json::array();
  if (args.input_snrs.size() >= 2) {
    const double lo = *std::min_element(args.input_snrs.begin(), args.input_snrs.end());
    const double hi = *std::max_element(args.input_snrs.begin(), args.input_snrs.end());
    for (const std::string& kind : args.noise_kinds) {
      const auto lo_it = lam_by_cell.find({kind, lo});
      const auto hi_it = lam_by_cell.find({kind, hi});
      if (lo_it == lam_by_cell.end() || hi_it == lam_by_cell.end()) continue;
      const double lo_mean = summarize(lo_it->second).mean;
      const double hi_mean = summarize(hi_it->second).mean;
      expectations.push_back(json{
          {"name", "lambda_higher_at_low_snr_" + kind},
          {"holds", lo_mean > hi_mean},
          {"low_snr_mean_db", lo_mean},
          {"high_snr_mean_db", hi_mean}});
    }
    const auto tone_it = lam_by_cell.find({"tone", lo});
    const auto white_it = lam_by_cell.find({"white", lo});
    if (tone_it != lam_by_cell.end() && white_it != lam_by_cell.end()) {
      const double tone_mean = summarize(tone_it->second).mean;
      const double white_mean = summarize(white_it->second).mean;
      expectations.push_back(json{{"name", "lambda_lower_for_tone_at_low_snr"},
                                  {"holds", tone_mean < white_mean},
                                  {"tone_mean_db", tone_mean},
                                  {"white_mean_db", white_mean}});
    }
  }

  json report{{"schema_version", 1},
              {"cells", std::move(cells_json)},
              {"expectations", std::move(expectations)},
              {"lambda_hat_min_db", lam_min_seen},
              {"lambda_hat_max_db", lam_max_seen},
              {"lambda_range",
               json{{"min_db", ms.pred.lambda_min}, {"max_db", ms.pred.lambda_max}}}};

  EvalLambdaPaths paths;
  paths.csv = args.out_dir / "lambda_analysis.csv";
  paths.report_json = args.out_dir / "lambda_report.json";
  write_text_file(paths.csv, csv);
  write_text_file(paths.report_json, report.dump(2) + "\n");
  return paths;
}

// --- gradient self-test ----------------------------------------------------------------

MiniInstance make_mini_instance(std::uint64_t seed) {
  MiniInstance mi;
  mi.ms.snri.encoder_basis = 8;
  mi.ms.snri.bottleneck = 6;
  mi.ms.snri.n_blocks = 2;
  mi.ms.snri.hidden = 8;
  mi.ms.pred.n_blocks = 1;
  mi.ms.pred.hidden = 8;
  mi.ms.pred.n_mels = 8;
  mi.ms.pred.window_ms = 8.0;
  mi.ms.pred.hop_ms = 4.0;
  mi.ms.backend = models::BackendConfig{};
  mi.ms.backend.n_classes = 3;
  mi.ms.backend.n_blocks = 1;
  mi.ms.backend.hidden = 8;
  mi.ms.backend.n_mels = 8;
  mi.ms.backend.window_ms = 8.0;
  mi.ms.backend.hop_ms = 4.0;
  mi.ms.build();

  Rng rng(seed);
  models::init_snri_net(mi.params, mi.ms.snri, rng);
  models::init_pred_net(mi.params, mi.ms.pred, rng);
  models::init_backend(mi.params, mi.ms.backend, rng);

  const int t_len = 256;
  Rng sig = rng.child("signal");
  mi.x.resize(t_len);
  mi.s.resize(t_len);
  mi.n.resize(t_len);
  for (int i = 0; i < t_len; ++i) {
    mi.s[static_cast<std::size_t>(i)] = 0.3 * sig.normal();
    mi.n[static_cast<std::size_t>(i)] = 0.2 * sig.normal();
    mi.x[static_cast<std::size_t>(i)] =
        mi.s[static_cast<std::size_t>(i)] + mi.n[static_cast<std::size_t>(i)];
  }
  mi.label = 1;
  return mi;
}

nlohmann::json run_gradcheck(std::uint64_t seed) {
  const MiniInstance mi = make_mini_instance(seed);
  const metrics::ThresholdConfig tcfg;

  auto joint_eval = [&](const grad::Params& p, grad::GradMap* g) {
    grad::Tape t;
    models::JointLossResult r =
        models::joint_loss(t, p, mi.ms, mi.x, mi.s, mi.n, mi.label,
                           models::JointMode::proposed, 0.01, 0.25, tcfg);
    const double v = r.total.scalar();
    if (g) *g = t.backward(r.total);
    return v;
  };
  auto task_eval = [&](const grad::Params& p, grad::GradMap* g) {
    grad::Tape t;
    models::JointLossResult r =
        models::joint_loss(t, p, mi.ms, mi.x, mi.s, mi.n, mi.label,
                           models::JointMode::proposed, 0.01, 0.25, tcfg);
    const double v = r.task_term.scalar();
    if (g) *g = t.backward(r.task_term);
    return v;
  };
  auto aux_eval = [&](const grad::Params& p, grad::GradMap* g) {
    grad::Tape t;
    models::JointLossResult r =
        models::joint_loss(t, p, mi.ms, mi.x, mi.s, mi.n, mi.label,
                           models::JointMode::proposed, 0.01, 0.25, tcfg);
    const double v = r.aux_term.scalar();
    if (g) *g = t.backward(r.aux_term);
    return v;
  };

  grad::GradCheckOptions opt;
  opt.seed = seed;
  // The improvement term's gradient to the predictor is blocked by design, so
  // finite differences on those parameters would disagree with the analytic
  // zero; they are checked separately per term below.
  for (const auto& [key, p] : mi.params) {
    if (key.rfind("pred_net/", 0) == 0) opt.exclude.insert(key);
  }
  const grad::GradCheckReport joint_report =
      grad::grad_check(joint_eval, mi.params, opt);

  grad::GradCheckOptions pred_opt;
  pred_opt.seed = seed + 1;
  for (const auto& [key, p] : mi.params) {
    if (key.rfind("pred_net/", 0) != 0) pred_opt.exclude.insert(key);
  }
  const grad::GradCheckReport task_report =
      grad::grad_check(task_eval, mi.params, pred_opt);

  grad::GradMap task_grads, aux_grads;
  task_eval(mi.params, &task_grads);
  aux_eval(mi.params, &aux_grads);
  double task_pred_norm = 0.0, aux_pred_norm = 0.0;
  for (const auto& [key, vec] : task_grads) {
    if (key.rfind("pred_net/", 0) != 0) continue;
    for (double v : vec) task_pred_norm += v * v;
  }
  for (const auto& [key, vec] : aux_grads) {
    if (key.rfind("pred_net/", 0) != 0) continue;
    for (double v : vec) aux_pred_norm += v * v;
  }
  task_pred_norm = std::sqrt(task_pred_norm);
  aux_pred_norm = std::sqrt(aux_pred_norm);

  const bool stop_rule_ok = aux_pred_norm == 0.0 && task_pred_norm > 0.0;
  auto report_json = [](const grad::GradCheckReport& r) {
    return json{{"passed", r.passed},
                {"max_rel_err", r.max_rel_err},
                {"n_checked", r.n_checked}};
  };
  return json{{"passed", joint_report.passed && task_report.passed && stop_rule_ok},
              {"joint_loss_check", report_json(joint_report)},
              {"task_term_predictor_check", report_json(task_report)},
              {"task_term_pred_grad_norm", task_pred_norm},
              {"improvement_term_pred_grad_norm", aux_pred_norm},
              {"stop_gradient_rule_ok", stop_rule_ok}};
}

// --- file-level metrics ----------------------------------------------------------------

json cmd_metrics(const std::filesystem::path& clean_path,
                 const std::filesystem::path& noise_path,
                 const std::filesystem::path& enhanced_path, double lambda_db) {
  const audio::AudioBuffer s = audio::wav_read(clean_path);
  const audio::AudioBuffer n = audio::wav_read(noise_path);
  const audio::AudioBuffer y = audio::wav_read(enhanced_path);
  if (s.size() != n.size() || s.size() != y.size()) {
    throw LengthMismatch("wav lengths differ: clean " + std::to_string(s.size()) +
                         ", noise " + std::to_string(n.size()) + ", enhanced " +
                         std::to_string(y.size()));
  }
  if (s.sample_rate != n.sample_rate || s.sample_rate != y.sample_rate) {
    throw LengthMismatch("wav sample rates differ");
  }
  const metrics::ThresholdConfig cfg;
  const metrics::SarDecomposition sar =
      metrics::sar_decompose(s.samples, n.samples, y.samples, cfg);
  const metrics::SnriTargetLoss loss =
      metrics::snri_target_loss(s.samples, n.samples, y.samples, lambda_db, cfg);
  return json{{"snr_in_db", metrics::snr(s.samples, n.samples)},
              {"snri_db", metrics::snri(s.samples, n.samples, y.samples)},
              {"sar_db", sar.sar_db},
              {"sar_loss", sar.sar_loss},
              {"snri_loss", loss.total}};
}

}  // namespace snrilab::harness
