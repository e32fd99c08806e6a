#include "snrilab/audio/melbank.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "snrilab/common/errors.hpp"
#include "snrilab/common/fft.hpp"

namespace snrilab::audio {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann_window(int n) {
  if (n <= 0) throw InvalidParams("hann_window: n must be positive");
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

int frame_count(std::size_t len, int win, int hop) {
  return static_cast<int>((len - static_cast<std::size_t>(win)) /
                          static_cast<std::size_t>(hop)) + 1;
}

MelFilterbank MelFilterbank::make(int n_mels, double window_ms, double hop_ms,
                                  int sample_rate) {
  if (n_mels < 1) throw InvalidParams("n_mels must be >= 1");
  if (sample_rate <= 0) throw InvalidParams("sample_rate must be positive");
  if (!(window_ms > 0.0) || !(hop_ms > 0.0)) {
    throw InvalidParams("window_ms and hop_ms must be positive");
  }

  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.window_ms = window_ms;
  fb.hop_ms = hop_ms;
  fb.sample_rate = sample_rate;
  fb.window_samples = static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
  fb.hop_samples = static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
  if (fb.window_samples < 2 || fb.hop_samples < 1) {
    throw InvalidParams("window/hop resolve to too few samples");
  }
  fb.n_fft = static_cast<int>(next_pow2(static_cast<std::size_t>(fb.window_samples)));

  const int n_bins = fb.n_fft / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double mel_hi = hz_to_mel(nyquist);
  // n_mels + 2 equally spaced mel points: lower edges, centers, upper edges.
  std::vector<double> edges_hz(static_cast<std::size_t>(n_mels) + 2);
  for (int m = 0; m < n_mels + 2; ++m) {
    edges_hz[m] = mel_to_hz(mel_hi * m / (n_mels + 1));
  }

  fb.weights.assign(static_cast<std::size_t>(n_mels) * n_bins, 0.0);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges_hz[m], center = edges_hz[m + 1], hi = edges_hz[m + 2];
    double row_sum = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fb.n_fft;
      double w = 0.0;
      if (f > lo && f < hi) {
        w = (f <= center) ? (f - lo) / (center - lo) : (hi - f) / (hi - center);
      }
      fb.weights[static_cast<std::size_t>(m) * n_bins + k] = w;
      row_sum += w;
    }
    if (!(row_sum > 0.0)) {
      throw InvalidParams("mel filter " + std::to_string(m) +
                          " covers no FFT bins; raise n_fft or lower n_mels");
    }
  }
  return fb;
}

FeatureMatrix logmel(const AudioBuffer& x, const MelFilterbank& fb) {
  if (x.size() < static_cast<std::size_t>(fb.window_samples)) {
    throw TooShort("logmel: need at least " + std::to_string(fb.window_samples) +
                   " samples, got " + std::to_string(x.size()));
  }
  const int frames = frame_count(x.size(), fb.window_samples, fb.hop_samples);
  const int n_bins = fb.n_bins();
  const std::vector<double> window = hann_window(fb.window_samples);

  FeatureMatrix out;
  out.rows = frames;
  out.cols = fb.n_mels;
  out.data.resize(static_cast<std::size_t>(frames) * fb.n_mels);

  std::vector<double> frame(static_cast<std::size_t>(fb.window_samples));
  std::vector<double> power(static_cast<std::size_t>(n_bins));
  for (int t = 0; t < frames; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * fb.hop_samples;
    for (int i = 0; i < fb.window_samples; ++i) {
      frame[i] = x.samples[off + i] * window[i];
    }
    const auto spec = rfft(frame, static_cast<std::size_t>(fb.n_fft));
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(spec[k]);
    for (int m = 0; m < fb.n_mels; ++m) {
      double acc = 0.0;
      const double* w = &fb.weights[static_cast<std::size_t>(m) * n_bins];
      for (int k = 0; k < n_bins; ++k) acc += w[k] * power[k];
      out.at(t, m) = std::log(acc + kLogmelFloor);
    }
  }
  return out;
}

}  // namespace snrilab::audio
