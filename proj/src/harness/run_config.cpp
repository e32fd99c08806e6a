#include "snrilab/harness/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "snrilab/common/errors.hpp"

namespace snrilab::harness {

namespace {

using nlohmann::json;

void check_keys(const json& j, const char* where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw SchemaMismatch(std::string(where) + " must be a JSON object");
  }
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) {
      throw SchemaMismatch("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void fetch(const json& j, const char* key, T& out, const char* where) {
  auto it = j.find(key);
  if (it == j.end()) return;  // keep default
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw SchemaMismatch("bad value for '" + std::string(key) + "' in " + where);
  }
}

}  // namespace

// --- per-config converters --------------------------------------------------------

json to_json(const audio::CorpusConfig& c) {
  return json{{"n_speech", c.n_speech},
              {"n_noise", c.n_noise},
              {"duration_s", c.duration_s},
              {"sample_rate", c.sample_rate},
              {"seed", c.seed}};
}

audio::CorpusConfig corpus_config_from_json(const json& j) {
  check_keys(j, "corpus", {"n_speech", "n_noise", "duration_s", "sample_rate", "seed"});
  audio::CorpusConfig c;
  fetch(j, "n_speech", c.n_speech, "corpus");
  fetch(j, "n_noise", c.n_noise, "corpus");
  fetch(j, "duration_s", c.duration_s, "corpus");
  fetch(j, "sample_rate", c.sample_rate, "corpus");
  fetch(j, "seed", c.seed, "corpus");
  return c;
}

json to_json(const models::SnriNetConfig& c) {
  return json{{"encoder_basis", c.encoder_basis},
              {"bottleneck", c.bottleneck},
              {"window_ms", c.window_ms},
              {"hop_ms", c.hop_ms},
              {"n_blocks", c.n_blocks},
              {"hidden", c.hidden},
              {"zeta", c.zeta},
              {"conditioned", c.conditioned},
              {"lambda_min", c.lambda_min},
              {"lambda_max", c.lambda_max},
              {"sample_rate", c.sample_rate}};
}

models::SnriNetConfig snri_net_config_from_json(const json& j) {
  check_keys(j, "snri_net",
             {"encoder_basis", "bottleneck", "window_ms", "hop_ms", "n_blocks",
              "hidden", "zeta", "conditioned", "lambda_min", "lambda_max",
              "sample_rate"});
  models::SnriNetConfig c;
  fetch(j, "encoder_basis", c.encoder_basis, "snri_net");
  fetch(j, "bottleneck", c.bottleneck, "snri_net");
  fetch(j, "window_ms", c.window_ms, "snri_net");
  fetch(j, "hop_ms", c.hop_ms, "snri_net");
  fetch(j, "n_blocks", c.n_blocks, "snri_net");
  fetch(j, "hidden", c.hidden, "snri_net");
  fetch(j, "zeta", c.zeta, "snri_net");
  fetch(j, "conditioned", c.conditioned, "snri_net");
  fetch(j, "lambda_min", c.lambda_min, "snri_net");
  fetch(j, "lambda_max", c.lambda_max, "snri_net");
  fetch(j, "sample_rate", c.sample_rate, "snri_net");
  return c;
}

json to_json(const models::PredNetConfig& c) {
  return json{{"n_blocks", c.n_blocks},       {"hidden", c.hidden},
              {"n_mels", c.n_mels},           {"lambda_min", c.lambda_min},
              {"lambda_max", c.lambda_max},   {"window_ms", c.window_ms},
              {"hop_ms", c.hop_ms},           {"sample_rate", c.sample_rate}};
}

models::PredNetConfig pred_net_config_from_json(const json& j) {
  check_keys(j, "pred_net",
             {"n_blocks", "hidden", "n_mels", "lambda_min", "lambda_max",
              "window_ms", "hop_ms", "sample_rate"});
  models::PredNetConfig c;
  fetch(j, "n_blocks", c.n_blocks, "pred_net");
  fetch(j, "hidden", c.hidden, "pred_net");
  fetch(j, "n_mels", c.n_mels, "pred_net");
  fetch(j, "lambda_min", c.lambda_min, "pred_net");
  fetch(j, "lambda_max", c.lambda_max, "pred_net");
  fetch(j, "window_ms", c.window_ms, "pred_net");
  fetch(j, "hop_ms", c.hop_ms, "pred_net");
  fetch(j, "sample_rate", c.sample_rate, "pred_net");
  return c;
}

json to_json(const models::BackendConfig& c) {
  return json{{"n_classes", c.n_classes},   {"n_blocks", c.n_blocks},
              {"hidden", c.hidden},         {"n_mels", c.n_mels},
              {"window_ms", c.window_ms},   {"hop_ms", c.hop_ms},
              {"sample_rate", c.sample_rate}};
}

models::BackendConfig backend_config_from_json(const json& j) {
  check_keys(j, "backend",
             {"n_classes", "n_blocks", "hidden", "n_mels", "window_ms",
              "hop_ms", "sample_rate"});
  models::BackendConfig c;
  fetch(j, "n_classes", c.n_classes, "backend");
  fetch(j, "n_blocks", c.n_blocks, "backend");
  fetch(j, "hidden", c.hidden, "backend");
  fetch(j, "n_mels", c.n_mels, "backend");
  fetch(j, "window_ms", c.window_ms, "backend");
  fetch(j, "hop_ms", c.hop_ms, "backend");
  fetch(j, "sample_rate", c.sample_rate, "backend");
  return c;
}

json to_json(const metrics::ThresholdConfig& c) {
  return json{{"tau", c.tau}, {"alpha", c.alpha}, {"zeta", c.zeta}, {"beta", c.beta}};
}

metrics::ThresholdConfig threshold_config_from_json(const json& j) {
  check_keys(j, "thresholds", {"tau", "alpha", "zeta", "beta"});
  metrics::ThresholdConfig c;
  fetch(j, "tau", c.tau, "thresholds");
  fetch(j, "alpha", c.alpha, "thresholds");
  fetch(j, "zeta", c.zeta, "thresholds");
  fetch(j, "beta", c.beta, "thresholds");
  return c;
}

json to_json(const trainer::TrainConfig& c) {
  return json{{"steps", c.steps},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"finetune_lr_scale", c.finetune_lr_scale},
              {"skip_frontend_prob", c.skip_frontend_prob},
              {"random_lambda_prob", c.random_lambda_prob},
              {"eta", c.eta},
              {"gamma", c.gamma},
              {"seed", c.seed},
              {"snr_min_db", c.snr_min_db},
              {"snr_max_db", c.snr_max_db}};
}

trainer::TrainConfig train_config_from_json(const json& j) {
  check_keys(j, "train",
             {"steps", "batch_size", "learning_rate", "finetune_lr_scale",
              "skip_frontend_prob", "random_lambda_prob", "eta", "gamma",
              "seed", "snr_min_db", "snr_max_db"});
  trainer::TrainConfig c;
  fetch(j, "steps", c.steps, "train");
  fetch(j, "batch_size", c.batch_size, "train");
  fetch(j, "learning_rate", c.learning_rate, "train");
  fetch(j, "finetune_lr_scale", c.finetune_lr_scale, "train");
  fetch(j, "skip_frontend_prob", c.skip_frontend_prob, "train");
  fetch(j, "random_lambda_prob", c.random_lambda_prob, "train");
  fetch(j, "eta", c.eta, "train");
  fetch(j, "gamma", c.gamma, "train");
  fetch(j, "seed", c.seed, "train");
  fetch(j, "snr_min_db", c.snr_min_db, "train");
  fetch(j, "snr_max_db", c.snr_max_db, "train");
  return c;
}

void EvalConfig::validate() const {
  if (targets.empty() || input_snrs.empty()) {
    throw InvalidParams("eval targets and input_snrs must be non-empty");
  }
  for (double v : targets) {
    if (!std::isfinite(v)) throw InvalidParams("eval targets must be finite");
  }
  for (double v : input_snrs) {
    if (!std::isfinite(v)) throw InvalidParams("eval input snrs must be finite");
  }
  if (utterances_per_cell < 1) {
    throw InvalidParams("utterances_per_cell must be >= 1");
  }
  if (!(snr_min_db <= snr_max_db)) {
    throw InvalidParams("eval snr range is empty");
  }
}

json to_json(const EvalConfig& c) {
  return json{{"targets", c.targets},
              {"input_snrs", c.input_snrs},
              {"utterances_per_cell", c.utterances_per_cell},
              {"snr_min_db", c.snr_min_db},
              {"snr_max_db", c.snr_max_db}};
}

EvalConfig eval_config_from_json(const json& j) {
  check_keys(j, "eval",
             {"targets", "input_snrs", "utterances_per_cell", "snr_min_db",
              "snr_max_db"});
  EvalConfig c;
  fetch(j, "targets", c.targets, "eval");
  fetch(j, "input_snrs", c.input_snrs, "eval");
  fetch(j, "utterances_per_cell", c.utterances_per_cell, "eval");
  fetch(j, "snr_min_db", c.snr_min_db, "eval");
  fetch(j, "snr_max_db", c.snr_max_db, "eval");
  return c;
}

// --- RunConfig ---------------------------------------------------------------------

RunConfig::RunConfig() {
  pretrain.steps = 2000;
  finetune.steps = 1000;
}

json RunConfig::to_json() const {
  return json{{"schema_version", schema_version},
              {"corpus", harness::to_json(corpus)},
              {"snri_net", harness::to_json(snri_net)},
              {"pred_net", harness::to_json(pred_net)},
              {"backend", harness::to_json(backend)},
              {"thresholds", harness::to_json(thresholds)},
              {"pretrain", harness::to_json(pretrain)},
              {"finetune", harness::to_json(finetune)},
              {"eval", harness::to_json(eval)}};
}

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, "run config",
             {"schema_version", "corpus", "snri_net", "pred_net", "backend",
              "thresholds", "pretrain", "finetune", "eval"});
  auto ver = j.find("schema_version");
  if (ver == j.end() || !ver->is_number_integer() || ver->get<int>() != 1) {
    throw SchemaMismatch("run config requires schema_version 1");
  }
  RunConfig c;
  if (j.contains("corpus")) c.corpus = corpus_config_from_json(j.at("corpus"));
  if (j.contains("snri_net")) c.snri_net = snri_net_config_from_json(j.at("snri_net"));
  if (j.contains("pred_net")) c.pred_net = pred_net_config_from_json(j.at("pred_net"));
  if (j.contains("backend")) c.backend = backend_config_from_json(j.at("backend"));
  if (j.contains("thresholds")) {
    c.thresholds = threshold_config_from_json(j.at("thresholds"));
  }
  if (j.contains("pretrain")) c.pretrain = train_config_from_json(j.at("pretrain"));
  if (j.contains("finetune")) c.finetune = train_config_from_json(j.at("finetune"));
  if (j.contains("eval")) c.eval = eval_config_from_json(j.at("eval"));
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaMismatch("run config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write run config '" + path.string() + "'");
  out << to_json().dump(2) << "\n";
}

void RunConfig::validate() const {
  snri_net.validate();
  pred_net.validate();
  backend.validate();
  thresholds.validate();
  pretrain.validate();
  finetune.validate();
  eval.validate();
}

}  // namespace snrilab::harness
