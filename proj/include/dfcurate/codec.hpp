#pragma once

// Codec round-trips through external transcoders. Templates are shell
// command lines with {in}, {out} and optionally {rate} placeholders; paths are
// single-quoted before substitution.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "dfcurate/audio.hpp"

namespace dfcurate {

struct CodecSpec {
  std::string name = "custom";  // opus | aac | custom
  std::string encode_template;
  std::string decode_template;  // must produce 16-bit mono WAV at {rate}
  std::string container_ext = ".bin";
};

CodecSpec opus_codec();  // ffmpeg, libopus at 16 kbps
CodecSpec aac_codec();   // ffmpeg, native AAC at 32 kbps

void validate(const CodecSpec& spec);

std::string shell_quote(std::string_view text);
std::string render_template(std::string_view tpl, const std::filesystem::path& in,
                            const std::filesystem::path& out, int sample_rate);

// PATH lookup for bare names, executable check for paths.
std::optional<std::filesystem::path> find_executable(std::string_view name);

// Encode then decode `input`; the result is trimmed or zero-padded to the
// input length and must come back at the input sample rate. Intermediate
// files live in a private directory under `workdir` which is always removed.
Waveform codec_roundtrip(const std::filesystem::path& input, const CodecSpec& spec,
                         const std::filesystem::path& workdir);

}  // namespace dfcurate
