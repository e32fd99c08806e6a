#pragma once

// Shared helpers for the test binaries: scratch directories, random vectors,
// and a tiny corpus builder. Everything is seed-deterministic.

#include <filesystem>
#include <string>
#include <vector>

#include "snrilab/audio/corpus.hpp"
#include "snrilab/common/rng.hpp"

namespace testutil {

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("snrilab_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> random_vector(snrilab::Rng& rng, int n,
                                         double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Small deterministic corpus for trainer/harness tests.
inline snrilab::audio::CorpusManifest small_corpus(
    const std::filesystem::path& root, int n_speech = 6, int n_noise = 6,
    double duration_s = 0.5, std::uint64_t seed = 3) {
  snrilab::audio::CorpusConfig cfg;
  cfg.n_speech = n_speech;
  cfg.n_noise = n_noise;
  cfg.duration_s = duration_s;
  cfg.seed = seed;
  return snrilab::audio::make_corpus(root, cfg);
}

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  if (a.size() != b.size()) return 1e300;
  return m;
}

}  // namespace testutil
