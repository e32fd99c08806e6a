#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace snrilab::audio {

// Mono sample sequence. Samples are dimensionless amplitudes, nominally in
// [-1, 1]; all math downstream is double precision.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

inline double energy(const std::vector<double>& v) {
  double e = 0.0;
  for (double x : v) e += x * x;
  return e;
}

inline double rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::sqrt(energy(v) / static_cast<double>(v.size()));
}

inline double peak_abs(const std::vector<double>& v) {
  double p = 0.0;
  for (double x : v) p = std::max(p, std::fabs(x));
  return p;
}

inline double energy(const AudioBuffer& b) { return energy(b.samples); }
inline double rms(const AudioBuffer& b) { return rms(b.samples); }
inline double peak_abs(const AudioBuffer& b) { return peak_abs(b.samples); }

}  // namespace snrilab::audio
