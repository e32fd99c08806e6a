#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "snrilab/audio/buffer.hpp"
#include "snrilab/audio/synth.hpp"

namespace snrilab::audio {

// One corpus item. Synthesis parameters are stored alongside the path so the
// whole corpus can be regenerated bit-identically from the manifest alone.
struct CorpusEntry {
  std::string id;
  std::string path;  // relative to the manifest root
  std::string kind;  // "speech" | "noise"
  int label = -1;    // speech only, class index
  std::string noise_kind;  // noise only: white | band | tone
  NoiseParams noise_params;
  double duration_s = 0.0;
  std::uint64_t seed = 0;
  int sample_rate = 0;
};

struct CorpusManifest {
  int sample_rate = 16000;
  std::vector<CorpusEntry> entries;

  std::vector<const CorpusEntry*> speech() const;
  std::vector<const CorpusEntry*> noise() const;
  const CorpusEntry& find(const std::string& id) const;

  static CorpusManifest load(const std::filesystem::path& manifest_path);
  void save(const std::filesystem::path& manifest_path) const;
  void validate() const;
};

struct CorpusConfig {
  int n_speech = 24;
  int n_noise = 12;
  double duration_s = 1.0;
  int sample_rate = 16000;
  std::uint64_t seed = 1;
};

// Synthesizes every entry, writes WAVs under root/wav/ plus root/manifest.json,
// and returns the manifest. Deterministic in (config, seed).
CorpusManifest make_corpus(const std::filesystem::path& root,
                           const CorpusConfig& cfg);

// Regenerates the waveform for one entry from its stored parameters.
AudioBuffer synth_entry(const CorpusEntry& entry);

// synth_entry scaled so the peak fits 16-bit range (unit-RMS noise would
// otherwise clip); this is what make_corpus writes to disk.
AudioBuffer render_entry(const CorpusEntry& entry);

}  // namespace snrilab::audio
