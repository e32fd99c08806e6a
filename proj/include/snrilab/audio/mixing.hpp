#pragma once

#include "snrilab/audio/buffer.hpp"

namespace snrilab::audio {

struct MixResult {
  AudioBuffer mixture;       // x = s + gain * n
  AudioBuffer scaled_noise;  // gain * n
  double gain = 1.0;
};

// Scales the noise so that 10*log10(||s||^2 / ||gain*n||^2) equals snr_db,
// then adds it to the reference. Throws SilentReference / SilentNoise on
// zero-energy inputs and LengthMismatch when the buffers disagree in length
// or sample rate.
MixResult mix_at_snr(const AudioBuffer& s, const AudioBuffer& n, double snr_db);

}  // namespace snrilab::audio
