#include "dfcurate/codec.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "dfcurate/error.hpp"

namespace dfcurate {

namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const fs::path& parent) {
    fs::create_directories(parent);
    std::string pattern = (parent / "codec-XXXXXX").string();
    std::vector<char> buf(pattern.begin(), pattern.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw Error(ErrorCode::kIo, "cannot create temp dir under " + parent.string());
    path_ = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string first_token(std::string_view cmd) {
  const auto start = cmd.find_first_not_of(" \t");
  if (start == std::string_view::npos) return {};
  const auto end = cmd.find_first_of(" \t", start);
  return std::string(cmd.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
}

std::string read_tail(const fs::path& path, std::size_t max_bytes = 2000) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  std::string text = s.str();
  if (text.size() > max_bytes) text = "..." + text.substr(text.size() - max_bytes);
  return text;
}

void run_step(const std::string& stage, const std::string& command, const fs::path& log) {
  const std::string full = "( " + command + " ) >" + shell_quote(log.string()) + " 2>&1";
  const int status = std::system(full.c_str());
  if (status == -1) throw Error(ErrorCode::kToolFailed, stage + ": could not start shell");
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    throw Error(ErrorCode::kToolFailed,
                stage + " exited with status " + std::to_string(code) + ": " + read_tail(log));
  }
}

}  // namespace

CodecSpec opus_codec() {
  return {"opus", "ffmpeg -nostdin -y -loglevel error -i {in} -c:a libopus -b:a 16k {out}",
          "ffmpeg -nostdin -y -loglevel error -i {in} -ar {rate} -ac 1 -c:a pcm_s16le {out}", ".opus"};
}

CodecSpec aac_codec() {
  return {"aac", "ffmpeg -nostdin -y -loglevel error -i {in} -c:a aac -b:a 32k {out}",
          "ffmpeg -nostdin -y -loglevel error -i {in} -ar {rate} -ac 1 -c:a pcm_s16le {out}", ".m4a"};
}

void validate(const CodecSpec& spec) {
  if (spec.name != "opus" && spec.name != "aac" && spec.name != "custom") {
    throw Error(ErrorCode::kInvalidArgument, "codec name must be opus, aac or custom");
  }
  for (const auto* tpl : {&spec.encode_template, &spec.decode_template}) {
    if (tpl->find("{in}") == std::string::npos || tpl->find("{out}") == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "codec template needs {in} and {out}: " + *tpl);
    }
  }
}

std::string shell_quote(std::string_view text) {
  std::string out = "'";
  for (char c : text) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::string render_template(std::string_view tpl, const fs::path& in, const fs::path& out, int sample_rate) {
  std::string result;
  for (std::size_t i = 0; i < tpl.size();) {
    if (tpl.substr(i, 4) == "{in}") {
      result += shell_quote(in.string());
      i += 4;
    } else if (tpl.substr(i, 5) == "{out}") {
      result += shell_quote(out.string());
      i += 5;
    } else if (tpl.substr(i, 6) == "{rate}") {
      result += std::to_string(sample_rate);
      i += 6;
    } else {
      result += tpl[i++];
    }
  }
  return result;
}

std::optional<fs::path> find_executable(std::string_view name) {
  if (name.empty()) return std::nullopt;
  auto runnable = [](const fs::path& p) { return fs::is_regular_file(p) && ::access(p.c_str(), X_OK) == 0; };
  if (name.find('/') != std::string_view::npos) {
    fs::path p(name);
    if (runnable(p)) return p;
    return std::nullopt;
  }
  const char* env = std::getenv("PATH");
  std::string_view path_list = env ? env : "/usr/local/bin:/usr/bin:/bin";
  while (!path_list.empty()) {
    const auto colon = path_list.find(':');
    const std::string_view dir = path_list.substr(0, colon);
    if (!dir.empty()) {
      fs::path candidate = fs::path(dir) / name;
      if (runnable(candidate)) return candidate;
    }
    if (colon == std::string_view::npos) break;
    path_list.remove_prefix(colon + 1);
  }
  return std::nullopt;
}

Waveform codec_roundtrip(const fs::path& input, const CodecSpec& spec, const fs::path& workdir) {
  validate(spec);
  const Waveform original = read_wav(input);
  for (const auto* tpl : {&spec.encode_template, &spec.decode_template}) {
    const std::string tool = first_token(*tpl);
    if (!find_executable(tool)) {
      throw Error(ErrorCode::kToolNotFound, "codec '" + spec.name + "' needs '" + tool + "', not found on PATH");
    }
  }

  TempDir tmp(workdir);
  const fs::path encoded = tmp.path() / ("encoded" + spec.container_ext);
  const fs::path decoded = tmp.path() / "decoded.wav";
  const fs::path log = tmp.path() / "tool.log";
  run_step(spec.name + " encode", render_template(spec.encode_template, input, encoded, original.sample_rate), log);
  run_step(spec.name + " decode", render_template(spec.decode_template, encoded, decoded, original.sample_rate), log);

  Waveform out;
  try {
    out = read_wav(decoded);
  } catch (const Error& e) {
    throw Error(ErrorCode::kToolFailed, spec.name + " decode produced unreadable audio: " + e.what());
  }
  if (out.sample_rate != original.sample_rate) {
    throw Error(ErrorCode::kToolFailed, spec.name + " decode returned " + std::to_string(out.sample_rate) +
                                            " Hz, expected " + std::to_string(original.sample_rate));
  }
  out.samples.resize(original.samples.size(), 0.0f);
  return out;
}

}  // namespace dfcurate
