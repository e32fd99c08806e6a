#include "snrilab/audio/synth.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "snrilab/common/errors.hpp"
#include "snrilab/common/fft.hpp"
#include "snrilab/common/rng.hpp"

namespace snrilab::audio {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct SpeechClassSpec {
  double f0_hz;
  double formants_hz[3];
  double bandwidths_hz[3];
};

// Formant triples loosely follow published vowel measurements; fundamentals
// are staggered so classes separate in both envelope and pitch.
constexpr SpeechClassSpec kSpeechClasses[kNumSpeechClasses] = {
    {105.0, {730.0, 1090.0, 2440.0}, {90.0, 110.0, 160.0}},
    {115.0, {270.0, 2290.0, 3010.0}, {60.0, 140.0, 180.0}},
    {125.0, {300.0, 870.0, 2240.0}, {60.0, 100.0, 150.0}},
    {135.0, {530.0, 1840.0, 2480.0}, {80.0, 120.0, 160.0}},
    {145.0, {570.0, 840.0, 2410.0}, {80.0, 100.0, 160.0}},
    {155.0, {660.0, 1720.0, 2410.0}, {90.0, 120.0, 160.0}},
    {165.0, {490.0, 1350.0, 1690.0}, {70.0, 110.0, 130.0}},
    {175.0, {440.0, 1020.0, 2240.0}, {70.0, 100.0, 150.0}},
    {185.0, {640.0, 1190.0, 2390.0}, {90.0, 110.0, 160.0}},
    {195.0, {390.0, 1990.0, 2550.0}, {70.0, 130.0, 170.0}},
};

double formant_envelope(const SpeechClassSpec& spec, double freq_hz) {
  double env = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double d = (freq_hz - spec.formants_hz[j]) / spec.bandwidths_hz[j];
    env += std::exp(-0.5 * d * d);
  }
  // Gentle spectral tilt so upper harmonics never vanish entirely.
  env += 0.02 * std::exp(-freq_hz / 3000.0);
  return env;
}

void check_duration(double duration_s, int sample_rate) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw InvalidParams("duration_s must be positive and finite");
  }
  if (sample_rate <= 0) throw InvalidParams("sample_rate must be positive");
  if (static_cast<long long>(duration_s * sample_rate) < 1) {
    throw InvalidParams("duration_s too short for one sample");
  }
}

void normalize_rms(std::vector<double>& x) {
  double sum = 0.0;
  for (double v : x) sum += v * v;
  const double r = std::sqrt(sum / static_cast<double>(x.size()));
  if (r <= 0.0) throw InvalidParams("cannot normalize an all-zero signal");
  for (double& v : x) v /= r;
}

}  // namespace

AudioBuffer synth_speech(int label, double duration_s, std::uint64_t seed,
                         int sample_rate) {
  if (label < 0 || label >= kNumSpeechClasses) {
    throw InvalidLabel("speech label " + std::to_string(label) +
                       " outside [0, " + std::to_string(kNumSpeechClasses - 1) + "]");
  }
  check_duration(duration_s, sample_rate);

  const SpeechClassSpec& spec = kSpeechClasses[label];
  Rng rng = Rng(seed).child(hash_tag("synth_speech") +
                            static_cast<std::uint64_t>(label));

  const auto n = static_cast<std::size_t>(duration_s * sample_rate);
  const double sr = static_cast<double>(sample_rate);
  const double f0 = spec.f0_hz * (1.0 + 0.08 * (rng.uniform() - 0.5));
  const double vib_rate = rng.uniform(4.0, 7.0);
  const double vib_phase = rng.uniform(0.0, kTwoPi);
  const double syl_rate = rng.uniform(2.5, 4.5);
  const double syl_phase = rng.uniform(0.0, kTwoPi);

  const double max_harmonic_hz = 0.95 * sr / 2.0;
  const int n_harm = static_cast<int>(max_harmonic_hz / f0);
  if (n_harm < 1) throw InvalidParams("fundamental above Nyquist");

  std::vector<double> amp(static_cast<std::size_t>(n_harm));
  std::vector<double> phase(static_cast<std::size_t>(n_harm));
  for (int h = 0; h < n_harm; ++h) {
    amp[h] = formant_envelope(spec, (h + 1) * f0) / (1.0 + 0.15 * h);
    phase[h] = rng.uniform(0.0, kTwoPi);
  }

  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples.resize(n);
  const std::size_t edge = std::min<std::size_t>(n / 2, static_cast<std::size_t>(0.025 * sr));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double inst_f0 = f0 * (1.0 + 0.015 * std::sin(kTwoPi * vib_rate * t + vib_phase));
    double v = 0.0;
    for (int h = 0; h < n_harm; ++h) {
      phase[h] += kTwoPi * (h + 1) * inst_f0 / sr;
      v += amp[h] * std::sin(phase[h]);
    }
    double env = 0.55 - 0.45 * std::cos(kTwoPi * syl_rate * t + syl_phase);
    if (i < edge) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * i / edge);
    if (n - 1 - i < edge) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * (n - 1 - i) / edge);
    v = v * env + 0.004 * rng.normal();
    buf.samples[i] = v;
  }

  const double pk = peak_abs(buf);
  if (pk <= 0.0) throw InvalidParams("synthesized silence; bad class table");
  const double g = 0.9 / pk;
  for (double& v : buf.samples) v *= g;
  return buf;
}

AudioBuffer synth_noise(NoiseKind kind, const NoiseParams& params,
                        double duration_s, std::uint64_t seed, int sample_rate) {
  check_duration(duration_s, sample_rate);
  const auto n = static_cast<std::size_t>(duration_s * sample_rate);
  const double sr = static_cast<double>(sample_rate);
  const double nyquist = sr / 2.0;

  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples.resize(n);

  switch (kind) {
    case NoiseKind::white: {
      Rng rng = Rng(seed).child(hash_tag("noise_white"));
      for (double& v : buf.samples) v = rng.normal();
      break;
    }
    case NoiseKind::tone: {
      const double f = params.tone_hz;
      if (!(f > 0.0) || !(f < nyquist)) {
        throw InvalidParams("tone_hz must lie in (0, Nyquist); got " +
                            std::to_string(f));
      }
      Rng rng = Rng(seed).child(hash_tag("noise_tone"));
      const double phase0 = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i) {
        buf.samples[i] = std::sin(kTwoPi * f * static_cast<double>(i) / sr + phase0);
      }
      break;
    }
    case NoiseKind::band: {
      const double lo = params.band_lo_hz;
      const double hi = params.band_hi_hz;
      if (!(lo >= 0.0) || !(hi > lo) || !(hi <= nyquist)) {
        throw InvalidParams("band edges must satisfy 0 <= lo < hi <= Nyquist");
      }
      Rng rng = Rng(seed).child(hash_tag("noise_band"));
      const std::size_t nfft = next_pow2(n);
      std::vector<std::complex<double>> spec(nfft);
      for (std::size_t i = 0; i < n; ++i) spec[i] = rng.normal();
      fft_inplace(spec, /*inverse=*/false);
      bool any = false;
      for (std::size_t k = 0; k <= nfft / 2; ++k) {
        const double f = static_cast<double>(k) * sr / static_cast<double>(nfft);
        const bool pass = (f >= lo && f <= hi);
        if (pass) any = true;
        if (!pass) {
          spec[k] = 0.0;
          if (k != 0 && k != nfft / 2) spec[nfft - k] = 0.0;
        }
      }
      if (!any) throw InvalidParams("band contains no spectral bins at this length");
      fft_inplace(spec, /*inverse=*/true);
      for (std::size_t i = 0; i < n; ++i) buf.samples[i] = spec[i].real();
      break;
    }
  }

  normalize_rms(buf.samples);
  return buf;
}

NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "white") return NoiseKind::white;
  if (name == "band") return NoiseKind::band;
  if (name == "tone") return NoiseKind::tone;
  throw InvalidParams("unknown noise kind: " + name);
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::white: return "white";
    case NoiseKind::band: return "band";
    case NoiseKind::tone: return "tone";
  }
  throw InvalidParams("unreachable noise kind");
}

}  // namespace snrilab::audio
