#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "snrilab/audio/corpus.hpp"
#include "snrilab/metrics/metrics.hpp"
#include "snrilab/models/models.hpp"
#include "snrilab/trainer/trainer.hpp"

namespace snrilab::harness {

struct EvalConfig {
  std::vector<double> targets = {3.0, 6.0, 9.0, 12.0};
  std::vector<double> input_snrs = {-5.0, 5.0};
  int utterances_per_cell = 24;
  double snr_min_db = -5.0;  // mixture-set preset range
  double snr_max_db = 20.0;

  void validate() const;
};

// One document holding every module's knobs. Parsing is strict: unknown keys
// and missing or wrong schema versions are SchemaMismatch, so typos cannot
// silently fall back to defaults. parse -> serialize -> parse is the identity.
struct RunConfig {
  int schema_version = 1;
  audio::CorpusConfig corpus;
  models::SnriNetConfig snri_net;
  models::PredNetConfig pred_net;
  models::BackendConfig backend;
  metrics::ThresholdConfig thresholds;
  trainer::TrainConfig pretrain;
  trainer::TrainConfig finetune;
  EvalConfig eval;

  RunConfig();  // desk-scale defaults (pretrain 2000 steps, finetune 1000)

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  void validate() const;
};

// Per-config converters (strict on unknown keys), reused by checkpoint meta.
nlohmann::json to_json(const audio::CorpusConfig& c);
audio::CorpusConfig corpus_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const models::SnriNetConfig& c);
models::SnriNetConfig snri_net_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const models::PredNetConfig& c);
models::PredNetConfig pred_net_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const models::BackendConfig& c);
models::BackendConfig backend_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const metrics::ThresholdConfig& c);
metrics::ThresholdConfig threshold_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const trainer::TrainConfig& c);
trainer::TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const nlohmann::json& j);

}  // namespace snrilab::harness
