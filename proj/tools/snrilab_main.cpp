// snrilab command-line interface.
//
// Exit codes: 0 success, 1 internal error, 2 usage or contract error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "snrilab/audio/corpus.hpp"
#include "snrilab/common/errors.hpp"
#include "snrilab/harness/harness.hpp"
#include "snrilab/trainer/trainer.hpp"

namespace {

using snrilab::harness::RunConfig;

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return RunConfig{};
  RunConfig rc = RunConfig::load(path);
  rc.validate();
  return rc;
}

nlohmann::json configs_meta(const RunConfig& rc) {
  return nlohmann::json{
      {"snri_net", snrilab::harness::to_json(rc.snri_net)},
      {"pred_net", snrilab::harness::to_json(rc.pred_net)},
      {"backend", snrilab::harness::to_json(rc.backend)},
      {"thresholds", snrilab::harness::to_json(rc.thresholds)}};
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir,
                                      const std::string& network, int step) {
  return out_dir / (network + "-" + std::to_string(step) + ".json");
}

int run(int argc, char** argv) {
  CLI::App app{"Target-controllable speech enhancement lab"};
  app.require_subcommand(1);

  // --- make-corpus ---------------------------------------------------------
  auto* sc_corpus = app.add_subcommand(
      "make-corpus", "Synthesize the speech/noise corpus and its manifest");
  std::string corpus_out, corpus_config;
  std::optional<std::uint64_t> corpus_seed;
  std::optional<int> corpus_speech, corpus_noise;
  sc_corpus->add_option("--out", corpus_out, "Corpus root directory")->required();
  sc_corpus->add_option("--config", corpus_config, "Run config JSON");
  sc_corpus->add_option("--seed", corpus_seed, "Corpus seed");
  sc_corpus->add_option("--speech", corpus_speech, "Number of speech entries");
  sc_corpus->add_option("--noise", corpus_noise, "Number of noise entries");

  // --- mix ------------------------------------------------------------------
  auto* sc_mix = app.add_subcommand("mix", "Write a mixture set (x, s, n triples)");
  snrilab::harness::MixArgs mix_args;
  std::string mix_manifest, mix_out;
  sc_mix->add_option("--manifest", mix_manifest, "Corpus manifest")->required();
  sc_mix->add_option("--out", mix_out, "Output directory")->required();
  sc_mix->add_option("--snr-min", mix_args.snr_min_db, "Lowest mixing SNR (dB)");
  sc_mix->add_option("--snr-max", mix_args.snr_max_db, "Highest mixing SNR (dB)");
  sc_mix->add_option("--count", mix_args.count, "Number of mixtures");
  sc_mix->add_option("--seed", mix_args.seed, "Mixing seed");

  // --- pretrain-se ------------------------------------------------------------
  auto* sc_se = app.add_subcommand(
      "pretrain-se", "Pretrain the enhancement frontend from scratch");
  std::string se_manifest, se_out, se_config, se_loss = "snri";
  std::optional<int> se_steps;
  std::optional<std::uint64_t> se_seed;
  sc_se->add_option("--manifest", se_manifest, "Corpus manifest")->required();
  sc_se->add_option("--out", se_out, "Run directory for checkpoint + log")->required();
  sc_se->add_option("--config", se_config, "Run config JSON");
  sc_se->add_option("--loss", se_loss, "snri: conditioned improvement-target loss; se: conventional separation loss")
      ->check(CLI::IsMember({"snri", "se"}));
  sc_se->add_option("--steps", se_steps, "Training steps");
  sc_se->add_option("--seed", se_seed, "Training seed");

  // --- pretrain-backend ----------------------------------------------------------
  auto* sc_be = app.add_subcommand("pretrain-backend",
                                   "Pretrain the classification backend");
  std::string be_manifest, be_out, be_config;
  std::optional<int> be_steps;
  std::optional<std::uint64_t> be_seed;
  sc_be->add_option("--manifest", be_manifest, "Corpus manifest")->required();
  sc_be->add_option("--out", be_out, "Run directory")->required();
  sc_be->add_option("--config", be_config, "Run config JSON");
  sc_be->add_option("--steps", be_steps, "Training steps");
  sc_be->add_option("--seed", be_seed, "Training seed");

  // --- finetune-joint ---------------------------------------------------------------
  auto* sc_ft = app.add_subcommand("finetune-joint",
                                   "Jointly fine-tune frontend and backend");
  std::string ft_manifest, ft_out, ft_config, ft_frontend, ft_backend;
  std::string ft_mode = "proposed";
  std::optional<int> ft_steps;
  std::optional<std::uint64_t> ft_seed;
  sc_ft->add_option("--manifest", ft_manifest, "Corpus manifest")->required();
  sc_ft->add_option("--frontend", ft_frontend, "Frontend checkpoint")->required();
  sc_ft->add_option("--backend", ft_backend, "Backend checkpoint")->required();
  sc_ft->add_option("--out", ft_out, "Run directory")->required();
  sc_ft->add_option("--config", ft_config, "Run config JSON");
  sc_ft->add_option("--mode", ft_mode, "proposed or baseline")
      ->check(CLI::IsMember({"proposed", "baseline"}));
  sc_ft->add_option("--steps", ft_steps, "Training steps");
  sc_ft->add_option("--seed", ft_seed, "Training seed");

  // --- eval-control -------------------------------------------------------------------
  auto* sc_ec = app.add_subcommand(
      "eval-control", "Per-target achieved-improvement evaluation");
  snrilab::harness::EvalControlArgs ec_args;
  std::string ec_manifest, ec_ckpt, ec_baseline, ec_out;
  sc_ec->add_option("--manifest", ec_manifest, "Corpus manifest")->required();
  sc_ec->add_option("--ckpt", ec_ckpt, "Conditioned frontend checkpoint")->required();
  sc_ec->add_option("--baseline-ckpt", ec_baseline,
                    "Unconditioned SE frontend checkpoint")->required();
  sc_ec->add_option("--out", ec_out, "Output directory")->required();
  sc_ec->add_option("--targets", ec_args.targets, "Improvement targets (dB)")
      ->delimiter(',');
  sc_ec->add_option("--input-snrs", ec_args.input_snrs, "Input SNR conditions (dB)")
      ->delimiter(',');
  sc_ec->add_option("--utterances", ec_args.utterances, "Utterances per condition");
  sc_ec->add_option("--seed", ec_args.seed, "Evaluation seed");
  sc_ec->add_option("--threads", ec_args.threads, "Worker threads (0 = env/1)");

  // --- eval-lambda ----------------------------------------------------------------------
  auto* sc_el = app.add_subcommand("eval-lambda",
                                   "Predicted-target analysis per noise kind");
  snrilab::harness::EvalLambdaArgs el_args;
  std::string el_manifest, el_ckpt, el_out;
  sc_el->add_option("--manifest", el_manifest, "Corpus manifest")->required();
  sc_el->add_option("--ckpt", el_ckpt, "Joint checkpoint")->required();
  sc_el->add_option("--out", el_out, "Output directory")->required();
  sc_el->add_option("--noise-kinds", el_args.noise_kinds, "Noise kinds")->delimiter(',');
  sc_el->add_option("--input-snrs", el_args.input_snrs, "Input SNR conditions (dB)")
      ->delimiter(',');
  sc_el->add_option("--utterances", el_args.utterances, "Utterances per cell");
  sc_el->add_option("--seed", el_args.seed, "Evaluation seed");
  sc_el->add_option("--threads", el_args.threads, "Worker threads (0 = env/1)");

  // --- metrics ---------------------------------------------------------------------------
  auto* sc_me = app.add_subcommand("metrics", "Print metrics for a WAV triple");
  std::string me_clean, me_noise, me_enhanced;
  double me_lambda = 0.0;
  sc_me->add_option("--clean", me_clean, "Clean reference WAV")->required();
  sc_me->add_option("--noise", me_noise, "Noise reference WAV")->required();
  sc_me->add_option("--enhanced", me_enhanced, "Enhanced WAV")->required();
  sc_me->add_option("--lambda", me_lambda, "Improvement target for the loss (dB)");

  // --- plot ------------------------------------------------------------------------------
  auto* sc_pl = app.add_subcommand("plot", "Render a summary CSV as an SVG chart");
  std::string pl_in, pl_out;
  sc_pl->add_option("--in", pl_in, "Summary CSV")->required();
  sc_pl->add_option("--out", pl_out, "Output SVG")->required();

  // --- gradcheck --------------------------------------------------------------------------
  auto* sc_gc = app.add_subcommand("gradcheck",
                                   "Finite-difference self-test of the joint loss");
  std::uint64_t gc_seed = 7;
  sc_gc->add_option("--seed", gc_seed, "Instance seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*sc_corpus) {
    RunConfig rc = load_config_or_default(corpus_config);
    snrilab::audio::CorpusConfig cc = rc.corpus;
    if (corpus_seed) cc.seed = *corpus_seed;
    if (corpus_speech) cc.n_speech = *corpus_speech;
    if (corpus_noise) cc.n_noise = *corpus_noise;
    const auto manifest = snrilab::audio::make_corpus(corpus_out, cc);
    std::cout << "wrote " << manifest.entries.size() << " entries under "
              << corpus_out << "\n";
    return 0;
  }

  if (*sc_mix) {
    mix_args.manifest_path = mix_manifest;
    mix_args.out_dir = mix_out;
    snrilab::harness::cmd_mix(mix_args);
    std::cout << "wrote " << mix_args.count << " mixtures under " << mix_out << "\n";
    return 0;
  }

  if (*sc_se) {
    RunConfig rc = load_config_or_default(se_config);
    snrilab::trainer::TrainConfig tc = rc.pretrain;
    if (se_steps) tc.steps = *se_steps;
    if (se_seed) tc.seed = *se_seed;
    snrilab::models::SnriNetConfig mc = rc.snri_net;
    mc.conditioned = se_loss == "snri";
    rc.snri_net = mc;

    const auto corpus = snrilab::audio::CorpusManifest::load(se_manifest);
    std::filesystem::create_directories(se_out);
    snrilab::trainer::RunLog log((std::filesystem::path(se_out) / "pretrain_se_log.jsonl").string());
    const auto result =
        snrilab::trainer::pretrain_snri_net(tc, mc, rc.thresholds, corpus, &log);

    nlohmann::json meta{{"network", "snri_net"},
                        {"configs", configs_meta(rc)},
                        {"train", snrilab::harness::to_json(tc)},
                        {"seed", tc.seed}};
    const auto path = checkpoint_path(se_out, "snri_net", tc.steps);
    snrilab::harness::save_model_checkpoint(path, result.params, meta);
    std::cout << "checkpoint: " << path.string()
              << "\nloss first/last 100-step mean: "
              << result.first_window_mean_loss << " / "
              << result.last_window_mean_loss << "\n";
    return 0;
  }

  if (*sc_be) {
    RunConfig rc = load_config_or_default(be_config);
    snrilab::trainer::TrainConfig tc = rc.pretrain;
    if (be_steps) tc.steps = *be_steps;
    if (be_seed) tc.seed = *be_seed;

    const auto corpus = snrilab::audio::CorpusManifest::load(be_manifest);
    std::filesystem::create_directories(be_out);
    snrilab::trainer::RunLog log((std::filesystem::path(be_out) / "pretrain_backend_log.jsonl").string());
    const auto params =
        snrilab::trainer::pretrain_backend(tc, rc.backend, corpus, &log);

    nlohmann::json meta{{"network", "backend"},
                        {"configs", configs_meta(rc)},
                        {"train", snrilab::harness::to_json(tc)},
                        {"seed", tc.seed}};
    const auto path = checkpoint_path(be_out, "backend", tc.steps);
    snrilab::harness::save_model_checkpoint(path, params, meta);
    std::cout << "checkpoint: " << path.string() << "\n";
    return 0;
  }

  if (*sc_ft) {
    RunConfig rc = load_config_or_default(ft_config);
    snrilab::trainer::TrainConfig tc = rc.finetune;
    if (ft_steps) tc.steps = *ft_steps;
    if (ft_seed) tc.seed = *ft_seed;
    const auto mode = ft_mode == "proposed"
                          ? snrilab::models::JointMode::proposed
                          : snrilab::models::JointMode::baseline;

    const auto frontend_ck =
        snrilab::harness::load_model_checkpoint(ft_frontend, "snri_net");
    const auto backend_ck =
        snrilab::harness::load_model_checkpoint(ft_backend, "backend");

    snrilab::models::ModelSet ms =
        snrilab::harness::model_set_from_meta(frontend_ck.meta);
    const snrilab::models::ModelSet backend_ms =
        snrilab::harness::model_set_from_meta(backend_ck.meta);
    ms.backend = backend_ms.backend;
    ms.pred = rc.pred_net;
    ms.build();

    snrilab::grad::Params start = frontend_ck.params;
    for (const auto& [key, p] : backend_ck.params) start[key] = p;

    const auto corpus = snrilab::audio::CorpusManifest::load(ft_manifest);
    std::filesystem::create_directories(ft_out);
    snrilab::trainer::RunLog log((std::filesystem::path(ft_out) / "finetune_log.jsonl").string());
    const auto result = snrilab::trainer::finetune_joint(
        tc, ms, rc.thresholds, start, corpus, mode, &log);

    nlohmann::json meta{{"network", "joint"},
                        {"mode", ft_mode},
                        {"configs",
                         nlohmann::json{
                             {"snri_net", snrilab::harness::to_json(ms.snri)},
                             {"pred_net", snrilab::harness::to_json(ms.pred)},
                             {"backend", snrilab::harness::to_json(ms.backend)},
                             {"thresholds", snrilab::harness::to_json(rc.thresholds)}}},
                        {"train", snrilab::harness::to_json(tc)},
                        {"seed", tc.seed}};
    const auto path = checkpoint_path(ft_out, "joint", tc.steps);
    snrilab::harness::save_model_checkpoint(path, result.params, meta);
    std::cout << "checkpoint: " << path.string() << "\nskip steps: "
              << result.skip_steps << ", random-target steps: "
              << result.random_lambda_steps
              << ", max audit predictor grad: " << result.max_audit_pred_grad
              << "\n";
    return 0;
  }

  if (*sc_ec) {
    ec_args.manifest_path = ec_manifest;
    ec_args.ckpt_path = ec_ckpt;
    ec_args.baseline_ckpt_path = ec_baseline;
    ec_args.out_dir = ec_out;
    const auto paths = snrilab::harness::cmd_eval_control(ec_args);
    std::cout << "per-utterance: " << paths.per_utterance_csv.string()
              << "\nsummary: " << paths.summary_csv.string() << "\n";
    return 0;
  }

  if (*sc_el) {
    el_args.manifest_path = el_manifest;
    el_args.ckpt_path = el_ckpt;
    el_args.out_dir = el_out;
    const auto paths = snrilab::harness::cmd_eval_lambda(el_args);
    std::ifstream report(paths.report_json);
    std::cout << report.rdbuf();
    return 0;
  }

  if (*sc_me) {
    const auto j = snrilab::harness::cmd_metrics(me_clean, me_noise, me_enhanced,
                                                 me_lambda);
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  if (*sc_pl) {
    snrilab::harness::cmd_plot(pl_in, pl_out);
    std::cout << "wrote " << pl_out << "\n";
    return 0;
  }

  if (*sc_gc) {
    const auto report = snrilab::harness::run_gradcheck(gc_seed);
    std::cout << report.dump(2) << "\n";
    return report.at("passed").get<bool>() ? 0 : 1;
  }

  return 2;  // unreachable: a subcommand is required
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const snrilab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
