#pragma once

#include <cstdint>
#include <string>

#include "snrilab/audio/buffer.hpp"

namespace snrilab::audio {

// Number of distinct speech classes the synthesizer can produce. Each class
// has its own fundamental range and formant pattern, so class identity is
// recoverable from the spectral envelope.
inline constexpr int kNumSpeechClasses = 10;

// Deterministic speech-like signal: a harmonic stack with a class-dependent
// formant envelope, slow syllabic amplitude modulation, and mild vibrato.
// Identical (label, seed) pairs produce bit-identical buffers.
// Peak |sample| <= 1. Throws InvalidLabel / InvalidParams.
AudioBuffer synth_speech(int label, double duration_s, std::uint64_t seed,
                         int sample_rate = 16000);

enum class NoiseKind { white, band, tone };

struct NoiseParams {
  double tone_hz = 4000.0;   // tone: sine frequency, must be < Nyquist
  double band_lo_hz = 500.0; // band: passband lower edge
  double band_hi_hz = 2000.0;
};

// Deterministic noise at unit RMS. white: seeded Gaussian; tone: pure sine
// with a seeded phase; band: Gaussian noise band-limited to
// [band_lo_hz, band_hi_hz] via a spectral mask. Throws InvalidParams.
AudioBuffer synth_noise(NoiseKind kind, const NoiseParams& params,
                        double duration_s, std::uint64_t seed,
                        int sample_rate = 16000);

NoiseKind noise_kind_from_string(const std::string& name);
std::string to_string(NoiseKind kind);

}  // namespace snrilab::audio
