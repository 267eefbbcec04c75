#pragma once

// Partition-and-assign augmentation: the training set is shuffled, split into
// as many parts as there are augmentations, and each part receives exactly
// one augmentation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dfcurate/audio.hpp"
#include "dfcurate/codec.hpp"
#include "dfcurate/embedding_store.hpp"
#include "dfcurate/rawboost.hpp"

namespace dfcurate {

enum class AugmentKind { kLnlConvolutive, kImpulsive, kStationaryAdditive, kCodec };

std::string_view to_string(AugmentKind kind);
AugmentKind parse_augment_kind(std::string_view text);

struct AugmentSpec {
  std::string name;
  AugmentKind kind = AugmentKind::kLnlConvolutive;
  LnlParams lnl;
  ImpulsiveParams impulsive;
  SnrNoiseParams stationary;
  CodecSpec codec;
};

// Seeded shuffle split into ops_count parts whose sizes differ by at most
// one (larger parts first). Returns id -> op index.
std::map<std::string, std::size_t> partition_augment(std::span<const SampleRecord> records,
                                                     std::size_t ops_count, std::uint64_t seed);

Waveform apply_augment(const AugmentSpec& spec, const std::filesystem::path& source, std::uint64_t seed,
                       const std::filesystem::path& workdir, AugmentStats* stats = nullptr);

struct AugmentTreeOptions {
  std::filesystem::path audio_root;  // source_path entries are relative to this
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  bool append = false;  // keep originals next to the augmented copies
  std::size_t workers = 1;
};

struct AugmentSummary {
  std::size_t processed = 0;
  std::size_t clipped_samples = 0;
  std::vector<std::size_t> per_op;
};

// Writes <out_dir>/audio/... plus <out_dir>/manifest.jsonl recording the op
// and seed of every sample.
AugmentSummary augment_tree(std::span<const SampleRecord> records, std::span<const AugmentSpec> ops,
                            const AugmentTreeOptions& opts);

std::vector<SampleRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(std::span<const SampleRecord> records, const std::filesystem::path& path);

}  // namespace dfcurate
