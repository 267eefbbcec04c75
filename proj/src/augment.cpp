#include "dfcurate/augment.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "dfcurate/error.hpp"
#include "dfcurate/parallel.hpp"
#include "dfcurate/util.hpp"

namespace dfcurate {

namespace fs = std::filesystem;

std::string_view to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::kLnlConvolutive: return "lnl_convolutive";
    case AugmentKind::kImpulsive: return "impulsive";
    case AugmentKind::kStationaryAdditive: return "stationary_additive";
    case AugmentKind::kCodec: return "codec";
  }
  return "codec";
}

AugmentKind parse_augment_kind(std::string_view text) {
  for (AugmentKind k : {AugmentKind::kLnlConvolutive, AugmentKind::kImpulsive, AugmentKind::kStationaryAdditive,
                        AugmentKind::kCodec}) {
    if (text == to_string(k)) return k;
  }
  throw Error(ErrorCode::kConfig, "unknown augmentation kind '" + std::string(text) + "'");
}

std::map<std::string, std::size_t> partition_augment(std::span<const SampleRecord> records, std::size_t ops_count,
                                                     std::uint64_t seed) {
  if (ops_count == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one augmentation");
  if (ops_count > records.size()) {
    throw Error(ErrorCode::kInvalidArgument, std::to_string(ops_count) + " augmentations but only " +
                                                 std::to_string(records.size()) + " records");
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t base = records.size() / ops_count;
  const std::size_t extra = records.size() % ops_count;
  std::map<std::string, std::size_t> assignment;
  std::size_t pos = 0;
  for (std::size_t part = 0; part < ops_count; ++part) {
    const std::size_t size = base + (part < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) {
      if (!assignment.emplace(records[order[pos++]].id, part).second) {
        throw Error(ErrorCode::kDuplicateId, "duplicate record id in augmentation input");
      }
    }
  }
  return assignment;
}

Waveform apply_augment(const AugmentSpec& spec, const fs::path& source, std::uint64_t seed, const fs::path& workdir,
                       AugmentStats* stats) {
  switch (spec.kind) {
    case AugmentKind::kLnlConvolutive: return apply_lnl_convolutive(read_wav(source), spec.lnl, seed, stats);
    case AugmentKind::kImpulsive: return apply_impulsive(read_wav(source), spec.impulsive, seed, stats);
    case AugmentKind::kStationaryAdditive:
      return apply_stationary_additive(read_wav(source), spec.stationary, seed, stats);
    case AugmentKind::kCodec: return codec_roundtrip(source, spec.codec, workdir);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown augmentation");
}

std::vector<SampleRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<SampleRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_manifest(std::span<const SampleRecord> records, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  for (const auto& r : records) out << serialize_record(r) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

namespace {

SampleRecord annotate(SampleRecord rec, const std::string& op, std::uint64_t seed, std::size_t clipped) {
  nlohmann::ordered_json extra =
      rec.extra_json.empty() ? nlohmann::ordered_json::object() : nlohmann::ordered_json::parse(rec.extra_json);
  extra["augment_op"] = op;
  if (op != "none") {
    extra["augment_seed"] = seed;
    extra["augment_clipped"] = clipped;
  }
  rec.extra_json = extra.dump();
  return rec;
}

fs::path output_relpath(const SampleRecord& rec, std::string_view suffix) {
  fs::path rel = fs::path("audio") / fs::path(rec.source_path).relative_path();
  rel.replace_filename(rel.stem().string() + std::string(suffix) + ".wav");
  return rel;
}

}  // namespace

AugmentSummary augment_tree(std::span<const SampleRecord> records, std::span<const AugmentSpec> ops,
                            const AugmentTreeOptions& opts) {
  const auto assignment = partition_augment(records, ops.size(), derive_seed(opts.seed, "augment/partition"));
  fs::create_directories(opts.out_dir);

  struct Outcome {
    SampleRecord augmented;
    std::size_t clipped = 0;
  };
  std::vector<Outcome> outcomes(records.size());
  parallel_for(records.size(), opts.workers, [&](std::size_t i) {
    const SampleRecord& rec = records[i];
    const std::size_t op = assignment.at(rec.id);
    const std::uint64_t seed = derive_seed(opts.seed, "augment/sample/" + rec.id);
    AugmentStats stats;
    const fs::path workdir = opts.out_dir / "tmp" / ("w" + std::to_string(i));
    const Waveform out = apply_augment(ops[op], opts.audio_root / rec.source_path, seed, workdir, &stats);
    std::error_code ec;
    fs::remove_all(workdir, ec);
    const fs::path rel = output_relpath(rec, opts.append ? ".aug" : "");
    fs::create_directories((opts.out_dir / rel).parent_path());
    write_wav(out, opts.out_dir / rel);

    SampleRecord aug = rec;
    aug.source_path = rel.generic_string();
    if (opts.append) aug.id = rec.id + "__aug";
    outcomes[i] = {annotate(std::move(aug), ops[op].name, seed, stats.clipped), stats.clipped};
  });
  std::error_code ec;
  fs::remove_all(opts.out_dir / "tmp", ec);

  AugmentSummary summary;
  summary.per_op.assign(ops.size(), 0);
  std::vector<SampleRecord> manifest;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (opts.append) {
      const fs::path rel = output_relpath(records[i], "");
      fs::create_directories((opts.out_dir / rel).parent_path());
      write_wav(read_wav(opts.audio_root / records[i].source_path), opts.out_dir / rel);
      SampleRecord orig = records[i];
      orig.source_path = rel.generic_string();
      manifest.push_back(annotate(std::move(orig), "none", 0, 0));
    }
    manifest.push_back(outcomes[i].augmented);
    summary.clipped_samples += outcomes[i].clipped;
    summary.per_op[assignment.at(records[i].id)] += 1;
    ++summary.processed;
  }
  write_manifest(manifest, opts.out_dir / "manifest.jsonl");
  return summary;
}

}  // namespace dfcurate
