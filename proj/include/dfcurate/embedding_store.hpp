#pragma once

// On-disk labeled embedding datasets and the in-memory pools built from them.
//
// A store directory holds two files:
//   manifest.jsonl  - one SampleRecord per line, row order significant
//   embeddings.emb  - "EMB1", u32 version=1, u32 dim, u64 count, then
//                     count*dim little-endian float32 values, row-major
//
// Stores are immutable once written. Pools reference store rows by index and
// never copy embedding values.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dfcurate {

enum class Label : std::uint8_t { kBonafide = 0, kSpoof = 1 };
enum class Split : std::uint8_t { kTrain = 0, kDev = 1, kEval = 2 };

std::string_view to_string(Label label);
std::string_view to_string(Split split);
Label parse_label(std::string_view text);
Split parse_split(std::string_view text);

struct SampleRecord {
  std::string id;
  std::string source_path;
  std::string dataset_name;
  Label label = Label::kBonafide;
  Split split = Split::kTrain;
  std::optional<std::string> language;
  std::optional<double> duration_s;
  // Compact JSON object holding fields this version does not know about;
  // written back verbatim so older readers never drop data.
  std::string extra_json;

  bool operator==(const SampleRecord&) const = default;
};

// Parses / serializes one manifest line.
SampleRecord parse_record(std::string_view json_line);
std::string serialize_record(const SampleRecord& record);

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  // values.size() must be a multiple of dim; dim must be positive.
  EmbeddingMatrix(std::uint32_t dim, std::vector<float> values);

  std::uint32_t dim() const noexcept { return dim_; }
  std::uint64_t count() const noexcept { return count_; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values_).subspan(i * dim_, dim_);
  }
  // Index of the first non-finite value, if any.
  std::optional<std::size_t> first_non_finite() const noexcept;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::uint32_t dim_ = 1;
  std::uint64_t count_ = 0;
  std::vector<float> values_;
};

struct DatasetStore {
  std::vector<SampleRecord> manifest;
  EmbeddingMatrix matrix;

  bool operator==(const DatasetStore&) const = default;
};

// Throws Error on any invariant violation: length mismatch, non-finite
// values, duplicate ids, empty id.
void validate_store(const DatasetStore& store);

// Validates and wraps; the returned store is shared read-only.
std::shared_ptr<const DatasetStore> make_store(std::vector<SampleRecord> manifest,
                                               EmbeddingMatrix matrix);

void write_store(std::span<const SampleRecord> manifest, const EmbeddingMatrix& matrix,
                 const std::filesystem::path& dir);
DatasetStore read_store(const std::filesystem::path& dir);
std::shared_ptr<const DatasetStore> load_store(const std::filesystem::path& dir);

inline constexpr std::string_view kManifestFile = "manifest.jsonl";
inline constexpr std::string_view kEmbeddingsFile = "embeddings.emb";

struct GroupKey {
  std::string dataset_name;
  Label label = Label::kBonafide;

  auto operator<=>(const GroupKey&) const = default;
};

// Training or evaluation pool: an ordered list of (store, row) references.
class LabeledDataset {
 public:
  LabeledDataset() = default;

  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  std::uint32_t dim() const noexcept { return dim_; }

  std::span<const float> features(std::size_t i) const {
    const RowRef& r = rows_[i];
    return stores_[r.store]->matrix.row(r.row);
  }
  const SampleRecord& record(std::size_t i) const {
    const RowRef& r = rows_[i];
    return stores_[r.store]->manifest[r.row];
  }
  const std::string& id(std::size_t i) const { return record(i).id; }
  Label label(std::size_t i) const { return record(i).label; }
  // spoof = 1, bonafide = 0
  int target(std::size_t i) const { return label(i) == Label::kSpoof ? 1 : 0; }
  GroupKey group(std::size_t i) const { return {record(i).dataset_name, record(i).label}; }

  std::size_t count(Label label) const;
  bool has_both_classes() const { return count(Label::kSpoof) > 0 && count(Label::kBonafide) > 0; }

  std::optional<std::size_t> index_of(std::string_view id) const;

  // Sub-pool with the given row indices, in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;

  // Bytes held by the pool itself, excluding the shared stores.
  std::size_t owned_bytes() const noexcept;

  // Short human-readable description, e.g. "ASV19+FoR (n=1234, dim=16)".
  const std::string& description() const noexcept { return description_; }
  void set_description(std::string text) { description_ = std::move(text); }

  friend LabeledDataset merge_pool(std::span<const std::shared_ptr<const DatasetStore>> stores,
                                   const std::optional<std::set<Split>>& split_filter);

 private:
  struct RowRef {
    std::uint32_t store;
    std::uint64_t row;
  };

  void rebuild_index();

  std::vector<std::shared_ptr<const DatasetStore>> stores_;
  std::vector<RowRef> rows_;
  std::unordered_map<std::string_view, std::size_t> id_index_;
  std::uint32_t dim_ = 0;
  std::string description_;
};

// Concatenates stores in order. Without a split filter every split is kept.
// Ids must be unique across the merged stores.
LabeledDataset merge_pool(std::span<const std::shared_ptr<const DatasetStore>> stores,
                          const std::optional<std::set<Split>>& split_filter = std::nullopt);

}  // namespace dfcurate
