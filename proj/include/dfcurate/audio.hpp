#pragma once

#include <filesystem>
#include <vector>

namespace dfcurate {

struct Waveform {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 16000;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
  bool operator==(const Waveform&) const = default;
};

// 16-bit PCM mono RIFF/WAVE only. Samples map to k / 32768; writing rounds
// half away from zero and saturates at the int16 range.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const Waveform& wave, const std::filesystem::path& path);

// Consecutive non-overlapping chunks of exactly chunk_s seconds; a shorter
// tail is dropped.
std::vector<Waveform> segment(const Waveform& wave, double chunk_s = 10.0);

float peak_abs(const Waveform& wave);

}  // namespace dfcurate
