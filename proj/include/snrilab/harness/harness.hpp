#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "snrilab/grad/checkpoint.hpp"
#include "snrilab/harness/run_config.hpp"
#include "snrilab/metrics/metrics.hpp"

namespace snrilab::harness {

// Worker count for utterance-parallel evaluation: explicit argument wins,
// then the SNRI_LAB_THREADS environment variable, then 1. Results are
// identical for any thread count (each task owns one preallocated slot).
int resolve_threads(int requested);

// --- checkpoint plumbing -------------------------------------------------------

// meta: {"network": ..., "configs": {...}} written alongside the parameters.
void save_model_checkpoint(const std::filesystem::path& path,
                           const grad::Params& params,
                           const nlohmann::json& meta);

// Loads and verifies `network` matches (IncompatibleCheckpoint otherwise).
grad::Checkpoint load_model_checkpoint(const std::filesystem::path& path,
                                       const std::string& network);

// Rebuilds a ModelSet from a checkpoint's embedded configs; missing config
// sections fall back to defaults.
models::ModelSet model_set_from_meta(const nlohmann::json& meta);

// --- mixture sets ---------------------------------------------------------------

struct MixArgs {
  std::filesystem::path manifest_path;
  std::filesystem::path out_dir;
  double snr_min_db = -5.0;  // evaluation preset
  double snr_max_db = 20.0;
  int count = 24;
  std::uint64_t seed = 1;
};

// Writes count WAV triples (x, s, n) plus index.json. The indexed
// input_snr_db is measured on the quantized pair, i.e. exactly what the snr
// oracle reports when reading the files back.
void cmd_mix(const MixArgs& args);

// One quantized evaluation mixture (exactly what the WAV files hold).
struct EvalMixture {
  audio::AudioBuffer x, s, n;
  double nominal_snr_db = 0.0;
  double measured_snr_db = 0.0;
  std::string utterance_id;
  std::string speech_id, noise_id;
};

// Deterministic quantized mixtures at one input SNR; the same (manifest,
// snr, count, seed) always gives identical signals. Noise entries can be
// restricted to one kind ("" = any).
std::vector<EvalMixture> make_eval_mixtures(const audio::CorpusManifest& corpus,
                                            double input_snr_db, int count,
                                            std::uint64_t seed,
                                            const std::string& noise_kind = "");

// --- control-accuracy evaluation (per-target achieved improvement) ---------------

struct EvalControlArgs {
  std::filesystem::path manifest_path;
  std::filesystem::path ckpt_path;           // conditioned frontend
  std::filesystem::path baseline_ckpt_path;  // unconditioned SE frontend
  std::filesystem::path out_dir;
  std::vector<double> targets = {3.0, 6.0, 9.0, 12.0};
  std::vector<double> input_snrs = {-5.0, 5.0};
  int utterances = 24;
  std::uint64_t seed = 1;
  int threads = 0;
};

// Separator under test: consumes one mixture and a target, returns the
// (speech, noise) estimate pair. Injectable so tests can substitute exact
// oracles for the trained networks.
using Enhancer =
    std::function<metrics::SeparatedPair(const EvalMixture& m, double lambda_db)>;

struct EvalControlPaths {
  std::filesystem::path per_utterance_csv;
  std::filesystem::path summary_csv;
};

// Core evaluation: `conditioned` drives the snri_net method (conditioned on
// each target), `separator` drives the postmix method (target ignored at
// separation time, applied by post-mixing). Every row's achieved value is
// computed from PCM16-quantized signals, the same bytes written to the WAVs.
EvalControlPaths eval_control(const EvalControlArgs& args, Enhancer conditioned,
                              Enhancer separator);

// CLI wrapper: loads the two checkpoints and runs eval_control.
EvalControlPaths cmd_eval_control(const EvalControlArgs& args);

// --- predicted-target analysis -----------------------------------------------------

struct EvalLambdaArgs {
  std::filesystem::path manifest_path;
  std::filesystem::path ckpt_path;  // joint checkpoint (predictor + frontend)
  std::filesystem::path out_dir;
  std::vector<std::string> noise_kinds = {"white", "band", "tone"};
  std::vector<double> input_snrs = {-5.0, 5.0};
  int utterances = 12;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct EvalLambdaPaths {
  std::filesystem::path csv;
  std::filesystem::path report_json;
};

EvalLambdaPaths cmd_eval_lambda(const EvalLambdaArgs& args);

// --- file-level metrics ---------------------------------------------------------------

// Reads the WAV triple and returns the metrics JSON object (also what the
// `metrics` subcommand prints).
nlohmann::json cmd_metrics(const std::filesystem::path& clean_path,
                           const std::filesystem::path& noise_path,
                           const std::filesystem::path& enhanced_path,
                           double lambda_db);

// --- plotting -------------------------------------------------------------------------

// Summary CSV -> standalone SVG (one polyline + CI band per method/SNR
// series). Byte-deterministic for identical input.
void cmd_plot(const std::filesystem::path& in_csv,
              const std::filesystem::path& out_svg);

// --- gradient self-test -----------------------------------------------------------

// Miniature end-to-end instance (tiny widths, 256-sample signal) shared by
// the gradcheck subcommand and the test suite.
struct MiniInstance {
  models::ModelSet ms;
  grad::Params params;
  std::vector<double> x, s, n;
  int label = 1;
};

MiniInstance make_mini_instance(std::uint64_t seed);

// Finite-difference check of the full proposed joint loss on the miniature
// instance (predictor parameters excluded behind the stop-gradient barrier),
// plus the per-term decomposition: the task term must reach the predictor,
// the improvement term must put exactly zero gradient on it. Returns a
// report object with a top-level "passed".
nlohmann::json run_gradcheck(std::uint64_t seed);

// --- shared small utilities -----------------------------------------------------------

// Shortest-ish decimal text for CSV cells: round-trips through double within
// 1e-12 relative. Deterministic across runs.
std::string format_value(double v);

struct SummaryStats {
  double mean = 0.0, ci_lo = 0.0, ci_hi = 0.0;
  int n = 0;
};

// Normal-approximation 99% confidence interval (z = 2.5758293035489).
SummaryStats summarize(const std::vector<double>& values);

}  // namespace snrilab::harness
