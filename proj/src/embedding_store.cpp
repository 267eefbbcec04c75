#include "dfcurate/embedding_store.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "dfcurate/error.hpp"

namespace dfcurate {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8;

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(p[i]) << (8 * i);
  }
  return value;
}

const std::set<std::string, std::less<>>& known_keys() {
  static const std::set<std::string, std::less<>> keys = {
      "id", "source_path", "dataset_name", "label", "split", "language", "duration_s"};
  return keys;
}

std::string require_string(const ordered_json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorCode::kFormat, std::string("manifest record missing key '") + key + "'");
  }
  if (!it->is_string()) {
    throw Error(ErrorCode::kFormat, std::string("manifest key '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

std::string_view to_string(Label label) {
  return label == Label::kSpoof ? "spoof" : "bonafide";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kEval: return "eval";
  }
  return "train";
}

Label parse_label(std::string_view text) {
  if (text == "bonafide") return Label::kBonafide;
  if (text == "spoof") return Label::kSpoof;
  throw Error(ErrorCode::kFormat, "unknown label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "dev") return Split::kDev;
  if (text == "eval") return Split::kEval;
  throw Error(ErrorCode::kFormat, "unknown split '" + std::string(text) + "'");
}

SampleRecord parse_record(std::string_view json_line) {
  ordered_json obj;
  try {
    obj = ordered_json::parse(json_line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed JSON line: ") + e.what());
  }
  if (!obj.is_object()) throw Error(ErrorCode::kFormat, "manifest line is not a JSON object");

  SampleRecord rec;
  rec.id = require_string(obj, "id");
  rec.source_path = require_string(obj, "source_path");
  rec.dataset_name = require_string(obj, "dataset_name");
  rec.label = parse_label(require_string(obj, "label"));
  rec.split = parse_split(require_string(obj, "split"));
  if (auto it = obj.find("language"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::kFormat, "language must be a string");
    rec.language = it->get<std::string>();
  }
  if (auto it = obj.find("duration_s"); it != obj.end() && !it->is_null()) {
    if (!it->is_number()) throw Error(ErrorCode::kFormat, "duration_s must be a number");
    const double d = it->get<double>();
    if (!std::isfinite(d) || d < 0.0) {
      throw Error(ErrorCode::kFormat, "duration_s must be finite and non-negative");
    }
    rec.duration_s = d;
  }
  ordered_json extra = ordered_json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known_keys().contains(it.key())) extra[it.key()] = it.value();
  }
  if (!extra.empty()) rec.extra_json = extra.dump();
  return rec;
}

std::string serialize_record(const SampleRecord& record) {
  ordered_json obj;
  obj["id"] = record.id;
  obj["source_path"] = record.source_path;
  obj["dataset_name"] = record.dataset_name;
  obj["label"] = to_string(record.label);
  obj["split"] = to_string(record.split);
  if (record.language) obj["language"] = *record.language;
  if (record.duration_s) obj["duration_s"] = *record.duration_s;
  if (!record.extra_json.empty()) {
    const auto extra = ordered_json::parse(record.extra_json);
    for (auto it = extra.begin(); it != extra.end(); ++it) {
      if (!known_keys().contains(it.key())) obj[it.key()] = it.value();
    }
  }
  return obj.dump();
}

EmbeddingMatrix::EmbeddingMatrix(std::uint32_t dim, std::vector<float> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "embedding dim must be positive");
  if (values_.size() % dim != 0) {
    throw Error(ErrorCode::kCountMismatch, "value count " + std::to_string(values_.size()) +
                                               " is not a multiple of dim " + std::to_string(dim));
  }
  count_ = values_.size() / dim;
}

std::optional<std::size_t> EmbeddingMatrix::first_non_finite() const noexcept {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) return i;
  }
  return std::nullopt;
}

void validate_store(const DatasetStore& store) {
  if (store.manifest.size() != store.matrix.count()) {
    throw Error(ErrorCode::kCountMismatch,
                "manifest has " + std::to_string(store.manifest.size()) + " records but matrix has " +
                    std::to_string(store.matrix.count()) + " rows");
  }
  if (auto bad = store.matrix.first_non_finite()) {
    const std::size_t row = *bad / store.matrix.dim();
    throw Error(ErrorCode::kNonFinite, "non-finite embedding value in row " + std::to_string(row) +
                                           " (id '" + store.manifest[row].id + "')");
  }
  std::unordered_set<std::string_view> seen;
  seen.reserve(store.manifest.size());
  for (const auto& rec : store.manifest) {
    if (rec.id.empty()) throw Error(ErrorCode::kFormat, "empty sample id");
    if (!seen.insert(rec.id).second) {
      throw Error(ErrorCode::kDuplicateId, "id '" + rec.id + "' appears more than once");
    }
    if (rec.duration_s && (!std::isfinite(*rec.duration_s) || *rec.duration_s < 0.0)) {
      throw Error(ErrorCode::kFormat, "negative or non-finite duration for id '" + rec.id + "'");
    }
  }
}

std::shared_ptr<const DatasetStore> make_store(std::vector<SampleRecord> manifest,
                                               EmbeddingMatrix matrix) {
  auto store = std::make_shared<DatasetStore>();
  store->manifest = std::move(manifest);
  store->matrix = std::move(matrix);
  validate_store(*store);
  return store;
}

void write_store(std::span<const SampleRecord> manifest, const EmbeddingMatrix& matrix,
                 const fs::path& dir) {
  DatasetStore probe_store{{manifest.begin(), manifest.end()}, matrix};
  validate_store(probe_store);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create directory " + dir.string() + ": " + ec.message());

  {
    std::ofstream out(dir / kManifestFile, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot open " + (dir / kManifestFile).string());
    for (const auto& rec : manifest) out << serialize_record(rec) << '\n';
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + (dir / kManifestFile).string());
  }

  std::string bytes;
  bytes.reserve(kHeaderBytes + matrix.values().size() * 4);
  bytes.append(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(bytes, kVersion);
  put_le<std::uint32_t>(bytes, matrix.dim());
  put_le<std::uint64_t>(bytes, matrix.count());
  for (float v : matrix.values()) put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(v));

  std::ofstream out(dir / kEmbeddingsFile, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + (dir / kEmbeddingsFile).string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + (dir / kEmbeddingsFile).string());
}

DatasetStore read_store(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestFile;
  const fs::path emb_path = dir / kEmbeddingsFile;
  if (!fs::exists(manifest_path)) throw Error(ErrorCode::kIo, "missing " + manifest_path.string());
  if (!fs::exists(emb_path)) throw Error(ErrorCode::kIo, "missing " + emb_path.string());

  DatasetStore store;
  {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + manifest_path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      try {
        store.manifest.push_back(parse_record(line));
      } catch (const Error& e) {
        throw Error(e.code(), manifest_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  std::ifstream in(emb_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + emb_path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kHeaderBytes) {
    throw Error(ErrorCode::kFormat, emb_path.string() + ": file shorter than header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorCode::kFormat, emb_path.string() + ": bad magic");
  }
  const auto version = get_le<std::uint32_t>(p + 4);
  if (version != kVersion) {
    throw Error(ErrorCode::kFormat, emb_path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto dim = get_le<std::uint32_t>(p + 8);
  const auto count = get_le<std::uint64_t>(p + 12);
  if (dim == 0) throw Error(ErrorCode::kFormat, emb_path.string() + ": dim is zero");
  const std::size_t payload = bytes.size() - kHeaderBytes;
  if (payload % (4ULL * dim) != 0 || payload / (4ULL * dim) != count) {
    throw Error(ErrorCode::kCountMismatch,
                emb_path.string() + ": header declares " + std::to_string(count) + " rows of dim " +
                    std::to_string(dim) + " but payload holds " + std::to_string(payload) + " bytes");
  }
  std::vector<float> values(count * dim);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_le<std::uint32_t>(p + kHeaderBytes + 4 * i));
  }
  store.matrix = EmbeddingMatrix(dim, std::move(values));
  try {
    validate_store(store);
  } catch (const Error& e) {
    throw Error(e.code(), dir.string() + ": " + e.what());
  }
  return store;
}

std::shared_ptr<const DatasetStore> load_store(const fs::path& dir) {
  return std::make_shared<const DatasetStore>(read_store(dir));
}

std::size_t LabeledDataset::count(Label which) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < rows_.size(); ++i) n += label(i) == which ? 1 : 0;
  return n;
}

std::optional<std::size_t> LabeledDataset::index_of(std::string_view id) const {
  auto it = id_index_.find(id);
  if (it == id_index_.end()) return std::nullopt;
  return it->second;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.stores_ = stores_;
  out.dim_ = dim_;
  out.rows_.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= rows_.size()) throw Error(ErrorCode::kInvalidArgument, "subset index out of range");
    out.rows_.push_back(rows_[i]);
  }
  out.rebuild_index();
  out.description_ = description_ + " [subset n=" + std::to_string(indices.size()) + "]";
  return out;
}

std::size_t LabeledDataset::owned_bytes() const noexcept {
  return rows_.capacity() * sizeof(RowRef) + stores_.capacity() * sizeof(stores_[0]) +
         id_index_.size() * (sizeof(std::string_view) + sizeof(std::size_t) + 2 * sizeof(void*));
}

void LabeledDataset::rebuild_index() {
  id_index_.clear();
  id_index_.reserve(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (!id_index_.emplace(id(i), i).second) {
      throw Error(ErrorCode::kDuplicateId, "id '" + id(i) + "' appears in more than one pooled row");
    }
  }
}

LabeledDataset merge_pool(std::span<const std::shared_ptr<const DatasetStore>> stores,
                          const std::optional<std::set<Split>>& split_filter) {
  LabeledDataset pool;
  std::ostringstream desc;
  for (std::size_t s = 0; s < stores.size(); ++s) {
    const auto& store = stores[s];
    if (!store) throw Error(ErrorCode::kInvalidArgument, "null store in merge");
    if (s == 0) {
      pool.dim_ = store->matrix.dim();
    } else if (store->matrix.dim() != pool.dim_) {
      throw Error(ErrorCode::kDimMismatch, "cannot merge dim " + std::to_string(store->matrix.dim()) +
                                               " store into dim " + std::to_string(pool.dim_) + " pool");
    }
    pool.stores_.push_back(store);
    for (std::uint64_t r = 0; r < store->manifest.size(); ++r) {
      if (split_filter && !split_filter->contains(store->manifest[r].split)) continue;
      pool.rows_.push_back({static_cast<std::uint32_t>(s), r});
    }
  }
  pool.rebuild_index();
  desc << "pool(n=" << pool.rows_.size() << ", dim=" << pool.dim_ << ")";
  pool.description_ = desc.str();
  return pool;
}

}  // namespace dfcurate
