#pragma once

#include <cstdint>
#include <filesystem>

#include "snrilab/audio/buffer.hpp"

namespace snrilab::audio {

// RIFF/WAVE PCM 16-bit mono only. Anything else is UnsupportedFormat.
AudioBuffer wav_read(const std::filesystem::path& path);
void wav_write(const std::filesystem::path& path, const AudioBuffer& buf);

// The exact value a sample takes after a write/read round trip. Used where a
// computation must match what a stored file will reproduce.
double pcm16_quantize(double sample);
std::int16_t pcm16_encode(double sample);

}  // namespace snrilab::audio
