#include "dfcurate/embedding_store.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "dfcurate/error.hpp"
#include "fixtures.hpp"

namespace dfcurate {
namespace {

namespace fs = std::filesystem;
using testing::record;

class StoreDirTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dfc_store_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kInvalidArgument;
}

TEST_F(StoreDirTest, EmptyStoreKeepsDim) {
  write_store({}, EmbeddingMatrix(8, {}), dir_);
  EXPECT_EQ(fs::file_size(dir_ / kEmbeddingsFile), 20u);
  const DatasetStore s = read_store(dir_);
  EXPECT_EQ(s.matrix.dim(), 8u);
  EXPECT_EQ(s.matrix.count(), 0u);
  EXPECT_TRUE(s.manifest.empty());
}

TEST_F(StoreDirTest, ThreeByTwoLayout) {
  std::vector<SampleRecord> manifest = {record("a", "D", Label::kSpoof), record("b", "D", Label::kBonafide),
                                        record("c", "D", Label::kSpoof, Split::kEval)};
  EmbeddingMatrix m(2, {1, 2, 3, 4, 5, 6});
  write_store(manifest, m, dir_);
  EXPECT_EQ(fs::file_size(dir_ / kEmbeddingsFile), 4u + 4 + 4 + 8 + 24);

  std::ifstream in(dir_ / kEmbeddingsFile, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(bytes.substr(0, 4), "EMB1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);   // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);   // dim
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 3);  // count
  // 1.0f == 0x3F800000
  EXPECT_EQ(static_cast<unsigned char>(bytes[23]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[22]), 0x80);

  const DatasetStore s = read_store(dir_);
  EXPECT_EQ(s.manifest, manifest);
  EXPECT_EQ(s.matrix, m);
}

TEST_F(StoreDirTest, RejectsNaNOnWrite) {
  std::vector<SampleRecord> manifest = {record("a", "D", Label::kSpoof)};
  EmbeddingMatrix m(2, {1.0f, std::numeric_limits<float>::quiet_NaN()});
  EXPECT_EQ(code_of([&] { write_store(manifest, m, dir_); }), ErrorCode::kNonFinite);
}

TEST_F(StoreDirTest, RejectsLengthMismatch) {
  std::vector<SampleRecord> manifest = {record("a", "D", Label::kSpoof)};
  EXPECT_EQ(code_of([&] { write_store(manifest, EmbeddingMatrix(2, {1, 2, 3, 4}), dir_); }),
            ErrorCode::kCountMismatch);
}

TEST_F(StoreDirTest, TruncatedEmbeddingsIsCountMismatch) {
  std::vector<SampleRecord> manifest = {record("a", "D", Label::kSpoof), record("b", "D", Label::kBonafide)};
  write_store(manifest, EmbeddingMatrix(2, {1, 2, 3, 4}), dir_);
  fs::resize_file(dir_ / kEmbeddingsFile, fs::file_size(dir_ / kEmbeddingsFile) - 4);
  EXPECT_EQ(code_of([&] { read_store(dir_); }), ErrorCode::kCountMismatch);
}

TEST_F(StoreDirTest, ManifestShorterThanMatrixIsCountMismatch) {
  std::vector<SampleRecord> manifest = {record("a", "D", Label::kSpoof), record("b", "D", Label::kBonafide)};
  write_store(manifest, EmbeddingMatrix(2, {1, 2, 3, 4}), dir_);
  std::ofstream(dir_ / kManifestFile, std::ios::trunc) << serialize_record(manifest[0]) << "\n";
  EXPECT_EQ(code_of([&] { read_store(dir_); }), ErrorCode::kCountMismatch);
}

TEST_F(StoreDirTest, DuplicateIdRejected) {
  std::vector<SampleRecord> manifest = {record("a", "D", Label::kSpoof), record("b", "D", Label::kBonafide)};
  write_store(manifest, EmbeddingMatrix(1, {1, 2}), dir_);
  std::ofstream(dir_ / kManifestFile, std::ios::trunc)
      << serialize_record(manifest[0]) << "\n" << serialize_record(manifest[0]) << "\n";
  EXPECT_EQ(code_of([&] { read_store(dir_); }), ErrorCode::kDuplicateId);
}

TEST_F(StoreDirTest, BadMagicAndVersion) {
  std::vector<SampleRecord> manifest = {record("a", "D", Label::kSpoof)};
  write_store(manifest, EmbeddingMatrix(1, {1}), dir_);
  {
    std::fstream f(dir_ / kEmbeddingsFile, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(2);
  }
  EXPECT_EQ(code_of([&] { read_store(dir_); }), ErrorCode::kFormat);
  {
    std::fstream f(dir_ / kEmbeddingsFile, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  EXPECT_EQ(code_of([&] { read_store(dir_); }), ErrorCode::kFormat);
}

TEST_F(StoreDirTest, NonFiniteOnDiskRejected) {
  std::vector<SampleRecord> manifest = {record("a", "D", Label::kSpoof)};
  write_store(manifest, EmbeddingMatrix(1, {1}), dir_);
  {
    std::fstream f(dir_ / kEmbeddingsFile, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20);
    const char inf[4] = {0, 0, static_cast<char>(0x80), 0x7F};  // +inf
    f.write(inf, 4);
  }
  EXPECT_EQ(code_of([&] { read_store(dir_); }), ErrorCode::kNonFinite);
}

TEST_F(StoreDirTest, MissingFileIsIoError) {
  fs::create_directories(dir_);
  EXPECT_EQ(code_of([&] { read_store(dir_); }), ErrorCode::kIo);
}

TEST(ManifestRecord, UnknownLabelSplitAndMalformedJson) {
  EXPECT_EQ(code_of([] {
              parse_record(R"({"id":"a","source_path":"x","dataset_name":"D","label":"fake","split":"train"})");
            }),
            ErrorCode::kFormat);
  EXPECT_EQ(code_of([] {
              parse_record(R"({"id":"a","source_path":"x","dataset_name":"D","label":"spoof","split":"test"})");
            }),
            ErrorCode::kFormat);
  EXPECT_EQ(code_of([] { parse_record(R"({"id":"a",)"); }), ErrorCode::kFormat);
  EXPECT_EQ(code_of([] { parse_record(R"({"id":"a","source_path":"x","label":"spoof","split":"train"})"); }),
            ErrorCode::kFormat);
}

TEST(ManifestRecord, UnknownFieldsPreserved) {
  const std::string line =
      R"({"id":"a","source_path":"x.wav","dataset_name":"D","label":"spoof","split":"dev","language":"en",)"
      R"("duration_s":3.5,"system":"tts-7","quality":{"mos":3.2}})";
  const SampleRecord r = parse_record(line);
  EXPECT_EQ(r.language, "en");
  EXPECT_DOUBLE_EQ(*r.duration_s, 3.5);
  EXPECT_EQ(r.split, Split::kDev);
  const SampleRecord again = parse_record(serialize_record(r));
  EXPECT_EQ(again, r);
  EXPECT_NE(serialize_record(r).find("\"system\":\"tts-7\""), std::string::npos);
}

TEST(ManifestRecord, NegativeDurationRejected) {
  EXPECT_EQ(code_of([] {
              parse_record(
                  R"({"id":"a","source_path":"x","dataset_name":"D","label":"spoof","split":"train","duration_s":-1})");
            }),
            ErrorCode::kFormat);
}

TEST_F(StoreDirTest, RandomRoundTripIsBitExact) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> u(-1e6f, 1e6f);
  for (int trial = 0; trial < 5; ++trial) {
    const std::uint32_t dim = 1 + rng() % 9;
    const std::size_t n = rng() % 20;
    std::vector<SampleRecord> manifest;
    std::vector<float> values;
    for (std::size_t i = 0; i < n; ++i) {
      auto r = record("id" + std::to_string(i), "D" + std::to_string(i % 3), i % 2 ? Label::kSpoof : Label::kBonafide,
                      static_cast<Split>(i % 3));
      if (i % 4 == 0) r.language = "de";
      if (i % 5 == 0) r.duration_s = 0.1 * static_cast<double>(i);
      manifest.push_back(r);
      for (std::uint32_t j = 0; j < dim; ++j) values.push_back(u(rng) * std::pow(10.0f, -float(rng() % 30)));
    }
    EmbeddingMatrix m(dim, values);
    write_store(manifest, m, dir_);
    const DatasetStore back = read_store(dir_);
    EXPECT_EQ(back.manifest, manifest);
    ASSERT_EQ(back.matrix.values().size(), values.size());
    EXPECT_EQ(0, std::memcmp(back.matrix.values().data(), values.data(), values.size() * sizeof(float)));
  }
}

TEST(MergePool, CountsAndOrder) {
  auto a = testing::store_from_rows("A", {{1}, {2}}, {Label::kSpoof, Label::kBonafide}, "a");
  auto b = testing::store_from_rows("B", {{3}, {4}, {5}}, {Label::kSpoof, Label::kBonafide, Label::kSpoof}, "b");
  std::vector<std::shared_ptr<const DatasetStore>> stores = {a, b};
  const LabeledDataset pool = merge_pool(stores);
  ASSERT_EQ(pool.size(), 5u);
  const std::vector<std::string> ids = {"a0", "a1", "b0", "b1", "b2"};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(pool.id(i), ids[i]);
    EXPECT_EQ(pool.features(i)[0], static_cast<float>(i + 1));
  }
  EXPECT_EQ(pool.group(3), (GroupKey{"B", Label::kBonafide}));
  EXPECT_EQ(pool.target(0), 1);
  EXPECT_EQ(pool.target(1), 0);
  EXPECT_EQ(*pool.index_of("b1"), 3u);
  EXPECT_FALSE(pool.index_of("zz"));
}

TEST(MergePool, SplitFilter) {
  std::vector<SampleRecord> manifest = {record("t0", "D", Label::kSpoof, Split::kTrain),
                                        record("e0", "D", Label::kSpoof, Split::kEval),
                                        record("t1", "D", Label::kBonafide, Split::kTrain)};
  auto s = make_store(manifest, EmbeddingMatrix(1, {1, 2, 3}));
  std::vector<std::shared_ptr<const DatasetStore>> stores = {s};
  EXPECT_EQ(merge_pool(stores).size(), 3u);
  const LabeledDataset filtered = merge_pool(stores, std::set<Split>{Split::kTrain, Split::kDev});
  ASSERT_EQ(filtered.size(), 2u);
  EXPECT_EQ(filtered.id(0), "t0");
  EXPECT_EQ(filtered.id(1), "t1");
}

TEST(MergePool, DimMismatch) {
  auto a = make_store({record("a", "A", Label::kSpoof)}, EmbeddingMatrix(4, {1, 2, 3, 4}));
  auto b = make_store({record("b", "B", Label::kSpoof)}, EmbeddingMatrix(8, std::vector<float>(8, 0.f)));
  std::vector<std::shared_ptr<const DatasetStore>> stores = {a, b};
  EXPECT_EQ(code_of([&] { merge_pool(stores); }), ErrorCode::kDimMismatch);
}

TEST(MergePool, CrossStoreDuplicateIdRejected) {
  auto a = make_store({record("x", "A", Label::kSpoof)}, EmbeddingMatrix(1, {1}));
  auto b = make_store({record("x", "B", Label::kSpoof)}, EmbeddingMatrix(1, {2}));
  std::vector<std::shared_ptr<const DatasetStore>> stores = {a, b};
  EXPECT_EQ(code_of([&] { merge_pool(stores); }), ErrorCode::kDuplicateId);
}

TEST(MergePool, RowsAreViewsIntoStores) {
  testing::GaussianSpec spec;
  spec.n = 500;
  spec.dim = 256;
  auto a = testing::gaussian_store("A", spec, "a");
  std::vector<std::shared_ptr<const DatasetStore>> stores = {a};
  const LabeledDataset pool = merge_pool(stores);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ASSERT_EQ(pool.features(i).data(), a->matrix.row(i).data());
  }
  // The pool's own footprint does not scale with dim.
  EXPECT_LT(pool.owned_bytes(), a->matrix.values().size() * sizeof(float) / 4);
}

}  // namespace
}  // namespace dfcurate
