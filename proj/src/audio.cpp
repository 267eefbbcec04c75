#include "dfcurate/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "dfcurate/error.hpp"

namespace dfcurate {

namespace {

std::uint32_t u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::kFormat, where + "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = u32(p + pos + 4);
    const unsigned char* body = p + pos + 8;
    const std::size_t available = bytes.size() - pos - 8;
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16 || available < 16) throw Error(ErrorCode::kFormat, where + "truncated fmt chunk");
      std::uint16_t format = u16(body);
      channels = u16(body + 2);
      rate = u32(body + 4);
      bits = u16(body + 14);
      if (format == 0xFFFE && size >= 40) format = u16(body + 24);  // WAVE_FORMAT_EXTENSIBLE subformat
      if (format != 1) throw Error(ErrorCode::kUnsupportedFormat, where + "only PCM encoding is supported");
      if (bits != 16) throw Error(ErrorCode::kUnsupportedFormat, where + "only 16-bit samples are supported");
      if (channels != 1) {
        throw Error(ErrorCode::kUnsupportedFormat, where + std::to_string(channels) + " channels; only mono is supported");
      }
      if (rate == 0) throw Error(ErrorCode::kFormat, where + "zero sample rate");
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw Error(ErrorCode::kFormat, where + "data chunk before fmt chunk");
      // Some writers leave the size field at 0 or 0xFFFFFFFF when streaming.
      std::size_t data_bytes = size;
      if (size == 0 || size == 0xFFFFFFFFu || size > available) data_bytes = available;
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(data_bytes / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(u16(body + 2 * i));
        w.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  throw Error(ErrorCode::kFormat, where + (have_fmt ? "missing data chunk" : "missing fmt chunk"));
}

void write_wav(const Waveform& wave, const std::filesystem::path& path) {
  if (wave.sample_rate <= 0) throw Error(ErrorCode::kInvalidArgument, "sample rate must be positive");
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, data_bytes);
  for (float s : wave.samples) {
    if (!std::isfinite(s)) throw Error(ErrorCode::kNonFinite, "non-finite sample in " + path.string());
    double scaled = std::round(static_cast<double>(s) * 32768.0);  // half away from zero
    if (scaled > 32767.0) scaled = 32767.0;
    if (scaled < -32768.0) scaled = -32768.0;
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<Waveform> segment(const Waveform& wave, double chunk_s) {
  if (!(chunk_s > 0)) throw Error(ErrorCode::kInvalidArgument, "chunk length must be positive");
  const auto chunk = static_cast<std::size_t>(std::llround(chunk_s * wave.sample_rate));
  std::vector<Waveform> out;
  if (chunk == 0) return out;
  for (std::size_t start = 0; start + chunk <= wave.samples.size(); start += chunk) {
    Waveform w;
    w.sample_rate = wave.sample_rate;
    w.samples.assign(wave.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     wave.samples.begin() + static_cast<std::ptrdiff_t>(start + chunk));
    out.push_back(std::move(w));
  }
  return out;
}

float peak_abs(const Waveform& wave) {
  float m = 0.0f;
  for (float s : wave.samples) m = std::max(m, std::abs(s));
  return m;
}

}  // namespace dfcurate
