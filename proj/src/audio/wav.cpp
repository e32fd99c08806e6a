#include "snrilab/audio/wav.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "snrilab/common/errors.hpp"

namespace snrilab::audio {

namespace {

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

}  // namespace

std::int16_t pcm16_encode(double sample) {
  double clamped = std::clamp(sample, -1.0, 1.0);
  long v = std::lround(clamped * 32767.0);
  v = std::clamp(v, -32767L, 32767L);
  return static_cast<std::int16_t>(v);
}

double pcm16_quantize(double sample) {
  return static_cast<double>(pcm16_encode(sample)) / 32767.0;
}

AudioBuffer wav_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();

  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw UnsupportedFormat("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  bool have_fmt = false;

  AudioBuffer buf;
  std::size_t off = 12;
  while (off + 8 <= n) {
    const char* id = bytes.data() + off;
    const std::uint32_t chunk_size = read_u32(p + off + 4);
    const std::size_t body = off + 8;
    if (body + chunk_size > n) {
      throw UnsupportedFormat("truncated chunk in " + path.string());
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw UnsupportedFormat("short fmt chunk");
      format = read_u16(p + body);
      channels = read_u16(p + body + 2);
      sample_rate = read_u32(p + body + 4);
      bits = read_u16(p + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw UnsupportedFormat("data chunk before fmt");
      if (format != 1) throw UnsupportedFormat("only PCM supported");
      if (channels != 1) throw UnsupportedFormat("only mono supported");
      if (bits != 16) throw UnsupportedFormat("only 16-bit supported");
      if (sample_rate == 0) throw UnsupportedFormat("zero sample rate");
      const std::size_t count = chunk_size / 2;
      buf.sample_rate = static_cast<int>(sample_rate);
      buf.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(p + body + 2 * i));
        buf.samples[i] = static_cast<double>(v) / 32767.0;
      }
      return buf;
    }
    off = body + chunk_size + (chunk_size & 1);
  }
  throw UnsupportedFormat("no data chunk in " + path.string());
}

void wav_write(const std::filesystem::path& path, const AudioBuffer& buf) {
  if (buf.samples.empty()) throw InvalidParams("refusing to write empty buffer");
  if (buf.sample_rate <= 0) throw InvalidParams("sample_rate must be positive");

  const std::uint32_t data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  put_u32(out, 36 + data_bytes);
  out.append("WAVE");
  out.append("fmt ");
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate) * 2);
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits
  out.append("data");
  put_u32(out, data_bytes);
  for (double s : buf.samples) {
    put_u16(out, static_cast<std::uint16_t>(pcm16_encode(s)));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace snrilab::audio
