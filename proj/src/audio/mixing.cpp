#include "snrilab/audio/mixing.hpp"

#include <cmath>

#include "snrilab/common/errors.hpp"

namespace snrilab::audio {

MixResult mix_at_snr(const AudioBuffer& s, const AudioBuffer& n, double snr_db) {
  if (s.size() != n.size()) {
    throw LengthMismatch("mix_at_snr: reference has " + std::to_string(s.size()) +
                         " samples, noise has " + std::to_string(n.size()));
  }
  if (s.sample_rate != n.sample_rate) {
    throw LengthMismatch("mix_at_snr: sample rates differ (" +
                         std::to_string(s.sample_rate) + " vs " +
                         std::to_string(n.sample_rate) + ")");
  }
  if (!std::isfinite(snr_db)) throw InvalidParams("mix_at_snr: snr_db must be finite");

  const double es = energy(s);
  const double en = energy(n);
  if (es <= 0.0) throw SilentReference("mix_at_snr: reference signal has zero energy");
  if (en <= 0.0) throw SilentNoise("mix_at_snr: noise signal has zero energy");

  const double k = std::sqrt(es / (en * std::pow(10.0, snr_db / 10.0)));

  MixResult out;
  out.gain = k;
  out.scaled_noise.sample_rate = n.sample_rate;
  out.scaled_noise.samples.resize(n.samples.size());
  out.mixture.sample_rate = s.sample_rate;
  out.mixture.samples.resize(s.samples.size());
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    out.scaled_noise.samples[i] = k * n.samples[i];
    out.mixture.samples[i] = s.samples[i] + out.scaled_noise.samples[i];
  }
  return out;
}

}  // namespace snrilab::audio
