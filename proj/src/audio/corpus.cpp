#include "snrilab/audio/corpus.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "snrilab/audio/wav.hpp"
#include "snrilab/common/errors.hpp"
#include "snrilab/common/rng.hpp"

namespace snrilab::audio {

namespace {

using nlohmann::json;

json entry_to_json(const CorpusEntry& e) {
  json j;
  j["id"] = e.id;
  j["path"] = e.path;
  j["kind"] = e.kind;
  if (e.kind == "speech") {
    j["label"] = e.label;
  } else {
    j["noise_kind"] = e.noise_kind;
    j["params"] = {{"tone_hz", e.noise_params.tone_hz},
                   {"band_lo_hz", e.noise_params.band_lo_hz},
                   {"band_hi_hz", e.noise_params.band_hi_hz}};
  }
  j["duration_s"] = e.duration_s;
  j["seed"] = e.seed;
  j["sample_rate"] = e.sample_rate;
  return j;
}

CorpusEntry entry_from_json(const json& j) {
  CorpusEntry e;
  try {
    e.id = j.at("id").get<std::string>();
    e.path = j.at("path").get<std::string>();
    e.kind = j.at("kind").get<std::string>();
    if (e.kind == "speech") {
      e.label = j.at("label").get<int>();
    } else if (e.kind == "noise") {
      e.noise_kind = j.at("noise_kind").get<std::string>();
      const json& p = j.at("params");
      e.noise_params.tone_hz = p.at("tone_hz").get<double>();
      e.noise_params.band_lo_hz = p.at("band_lo_hz").get<double>();
      e.noise_params.band_hi_hz = p.at("band_hi_hz").get<double>();
    } else {
      throw SchemaMismatch("corpus entry kind must be speech or noise, got " + e.kind);
    }
    e.duration_s = j.at("duration_s").get<double>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.sample_rate = j.at("sample_rate").get<int>();
  } catch (const json::exception& ex) {
    throw SchemaMismatch(std::string("corpus entry malformed: ") + ex.what());
  }
  if (j.contains("label") != (e.kind == "speech")) {
    throw SchemaMismatch("label must be present exactly for speech entries (id " +
                         e.id + ")");
  }
  return e;
}

}  // namespace

std::vector<const CorpusEntry*> CorpusManifest::speech() const {
  std::vector<const CorpusEntry*> out;
  for (const auto& e : entries) {
    if (e.kind == "speech") out.push_back(&e);
  }
  return out;
}

std::vector<const CorpusEntry*> CorpusManifest::noise() const {
  std::vector<const CorpusEntry*> out;
  for (const auto& e : entries) {
    if (e.kind == "noise") out.push_back(&e);
  }
  return out;
}

const CorpusEntry& CorpusManifest::find(const std::string& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return e;
  }
  throw InvalidParams("corpus has no entry with id " + id);
}

void CorpusManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (!ids.insert(e.id).second) {
      throw SchemaMismatch("duplicate corpus id " + e.id);
    }
    if (e.kind == "speech") {
      if (e.label < 0 || e.label >= kNumSpeechClasses) {
        throw SchemaMismatch("speech entry " + e.id + " has label outside range");
      }
    } else if (e.kind == "noise") {
      noise_kind_from_string(e.noise_kind);
    } else {
      throw SchemaMismatch("entry " + e.id + " has unknown kind " + e.kind);
    }
    if (!(e.duration_s > 0.0)) {
      throw SchemaMismatch("entry " + e.id + " has non-positive duration");
    }
    if (e.sample_rate != sample_rate) {
      throw SchemaMismatch("entry " + e.id + " sample rate differs from corpus rate");
    }
  }
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw SchemaMismatch(std::string("manifest is not valid JSON: ") + ex.what());
  }
  CorpusManifest m;
  try {
    m.sample_rate = j.at("sample_rate").get<int>();
    for (const auto& je : j.at("entries")) {
      m.entries.push_back(entry_from_json(je));
    }
  } catch (const json::exception& ex) {
    throw SchemaMismatch(std::string("manifest malformed: ") + ex.what());
  }
  m.validate();
  return m;
}

void CorpusManifest::save(const std::filesystem::path& manifest_path) const {
  validate();
  json j;
  j["sample_rate"] = sample_rate;
  j["entries"] = json::array();
  for (const auto& e : entries) j["entries"].push_back(entry_to_json(e));
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + manifest_path.string());
  out << j.dump(2) << "\n";
}

AudioBuffer synth_entry(const CorpusEntry& entry) {
  if (entry.kind == "speech") {
    return synth_speech(entry.label, entry.duration_s, entry.seed, entry.sample_rate);
  }
  return synth_noise(noise_kind_from_string(entry.noise_kind), entry.noise_params,
                     entry.duration_s, entry.seed, entry.sample_rate);
}

AudioBuffer render_entry(const CorpusEntry& entry) {
  AudioBuffer buf = synth_entry(entry);
  const double pk = peak_abs(buf);
  if (pk > 0.9) {
    const double g = 0.9 / pk;
    for (double& v : buf.samples) v *= g;
  }
  return buf;
}

CorpusManifest make_corpus(const std::filesystem::path& root,
                           const CorpusConfig& cfg) {
  if (cfg.n_speech < 1 || cfg.n_noise < 1) {
    throw InvalidParams("corpus needs at least one speech and one noise entry");
  }
  std::filesystem::create_directories(root / "wav");

  CorpusManifest m;
  m.sample_rate = cfg.sample_rate;

  auto derive_seed = [&cfg](const std::string& id) {
    std::uint64_t st = cfg.seed ^ hash_tag(id);
    return splitmix64(st);
  };

  char name[32];
  for (int i = 0; i < cfg.n_speech; ++i) {
    CorpusEntry e;
    std::snprintf(name, sizeof(name), "sp%04d", i);
    e.id = name;
    e.path = std::string("wav/") + name + ".wav";
    e.kind = "speech";
    e.label = i % kNumSpeechClasses;
    e.duration_s = cfg.duration_s;
    e.seed = derive_seed(e.id);
    e.sample_rate = cfg.sample_rate;
    m.entries.push_back(e);
  }

  const char* kinds[] = {"white", "band", "tone"};
  for (int i = 0; i < cfg.n_noise; ++i) {
    CorpusEntry e;
    std::snprintf(name, sizeof(name), "nz%04d", i);
    e.id = name;
    e.path = std::string("wav/") + name + ".wav";
    e.kind = "noise";
    e.noise_kind = kinds[i % 3];
    // Defaults: 4 kHz tone and a mid band; vary the band a little so band
    // noises are not all identical in support.
    e.noise_params.tone_hz = 4000.0;
    e.noise_params.band_lo_hz = 300.0 + 200.0 * ((i / 3) % 3);
    e.noise_params.band_hi_hz = 1800.0 + 600.0 * ((i / 3) % 3);
    e.duration_s = cfg.duration_s;
    e.seed = derive_seed(e.id);
    e.sample_rate = cfg.sample_rate;
    m.entries.push_back(e);
  }

  for (const auto& e : m.entries) {
    wav_write(root / e.path, render_entry(e));
  }
  m.save(root / "manifest.json");
  return m;
}

}  // namespace snrilab::audio
