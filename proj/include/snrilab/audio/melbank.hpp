#pragma once

#include <cstddef>
#include <vector>

#include "snrilab/audio/buffer.hpp"

namespace snrilab::audio {

// Row-major frames-by-features matrix used by the exact feature path.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct MelFilterbank {
  int n_mels = 0;
  int n_fft = 0;
  double window_ms = 0.0;
  double hop_ms = 0.0;
  int sample_rate = 0;
  int window_samples = 0;
  int hop_samples = 0;
  // n_mels rows by (n_fft/2 + 1) columns, row-major, nonnegative.
  std::vector<double> weights;

  int n_bins() const { return n_fft / 2 + 1; }
  double weight(int mel, int bin) const {
    return weights[static_cast<std::size_t>(mel) * n_bins() + bin];
  }

  // Triangular filters equally spaced on the mel scale over [0, Nyquist].
  static MelFilterbank make(int n_mels, double window_ms, double hop_ms,
                            int sample_rate);
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Periodic Hann window of length n.
std::vector<double> hann_window(int n);

// floor((len - win) / hop) + 1; callers must check len >= win first.
int frame_count(std::size_t len, int win, int hop);

// Additive floor inside the log so silence maps to log(kLogmelFloor).
inline constexpr double kLogmelFloor = 1e-10;

// log(mel power + floor) per frame. Throws TooShort when the buffer is
// shorter than one analysis window.
FeatureMatrix logmel(const AudioBuffer& x, const MelFilterbank& fb);

}  // namespace snrilab::audio
