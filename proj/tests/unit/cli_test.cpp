#include "dfcurate/cli.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dfcurate/audio.hpp"
#include "dfcurate/augment.hpp"
#include "dfcurate/pruning.hpp"
#include "dfcurate/version.hpp"
#include "fixtures.hpp"

namespace dfcurate {
namespace {

namespace fs = std::filesystem;
using testing::gaussian_store;
using testing::GaussianSpec;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dfcurate");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines_with(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  std::istringstream s(text);
  std::string line;
  while (std::getline(s, line)) n += line.find(needle) != std::string::npos;
  return n;
}

void save(const std::shared_ptr<const DatasetStore>& s, const fs::path& dir) { write_store(s->manifest, s->matrix, dir); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dfc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    save(gaussian_store("A", {.n = 120, .dim = 6, .separation = 3.0, .flip_fraction = 0.05, .seed = 1}, "a"),
         dir_ / "a");
    save(gaussian_store("B", {.n = 80, .dim = 6, .separation = 0.5, .seed = 2}, "b"), dir_ / "b");
    save(gaussian_store("C", {.n = 100, .dim = 6, .separation = 2.0, .offset = 1.0, .seed = 3}, "c"), dir_ / "c");
    save(gaussian_store("E", {.n = 100, .dim = 6, .separation = 3.0, .seed = 4}, "e"), dir_ / "e");
    write_config("");
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write_config(const std::string& extra) {
    std::ofstream f(dir_ / "run.toml");
    f << "seed = 11\n" << extra << "\n[stores]\nA = \"a\"\nB = \"b\"\nC = \"c\"\n[eval]\nE = \"e\"\n[train]\nC = 10.0\n";
  }
  std::string config() const { return (dir_ / "run.toml").string(); }
  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST(CliBasics, HelpVersionAndUsageErrors) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  const CliResult v = cli({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find(std::string(kVersion)), std::string::npos);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"train", "--no-such-flag"}).code, 2);
  EXPECT_EQ(cli({"train"}).code, 2);  // needs --config
  EXPECT_EQ(cli({"validate"}).code, 2);
  EXPECT_EQ(cli({"report"}).code, 2);
  EXPECT_EQ(cli({"train", "-c", "/no/such/file.toml"}).code, 2);
}

TEST_F(CliTest, ValidateReportsCounts) {
  const CliResult r = cli({"validate", out("a"), out("b")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n=120 dim=6"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("train="), std::string::npos);
  const CliResult c = cli({"validate", "-c", config()});
  EXPECT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(count_lines_with(c.out, "ok "), 4u);
}

TEST_F(CliTest, ValidateFlagsNonFiniteStore) {
  fs::copy(dir_ / "a", dir_ / "bad");
  {
    std::fstream f(dir_ / "bad" / kEmbeddingsFile, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20 + 4 * 3);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    f.write(reinterpret_cast<const char*>(&nan), sizeof(nan));
  }
  const CliResult r = cli({"validate", out("a"), out("bad")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("FAIL bad"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
  EXPECT_NE(r.out.find("ok   a"), std::string::npos);
}

TEST_F(CliTest, ValidateFlagsMissingManifest) {
  fs::copy(dir_ / "a", dir_ / "nomanifest");
  fs::remove(dir_ / "nomanifest" / kManifestFile);
  const CliResult r = cli({"validate", out("nomanifest")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("FAIL nomanifest"), std::string::npos) << r.err;
}

TEST_F(CliTest, SeparableEvalGivesZeroAndInvertedGivesHundred) {
  save(gaussian_store("S", {.n = 100, .dim = 6, .separation = 40.0, .seed = 5}, "s"), dir_ / "s");
  auto inverted = read_store(dir_ / "s");
  for (auto& r : inverted.manifest) r.label = r.label == Label::kSpoof ? Label::kBonafide : Label::kSpoof;
  write_store(inverted.manifest, inverted.matrix, dir_ / "inv");
  {
    std::ofstream f(dir_ / "sep.toml");
    f << "[stores]\nS = \"s\"\n[eval]\nsame = \"s\"\ninverted = \"inv\"\n";
  }
  const std::string cfg = (dir_ / "sep.toml").string();
  const CliResult t = cli({"train", "-c", cfg, "-o", out("o")});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(dir_ / "o" / "model.json"));
  const CliResult e = cli({"eval", "-c", cfg, "-o", out("o")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("EER same: 0.00%"), std::string::npos) << e.out;
  EXPECT_NE(e.out.find("EER inverted: 100.00%"), std::string::npos) << e.out;
  EXPECT_NE(e.out.find("EER mean: 50.00%"), std::string::npos) << e.out;
  EXPECT_TRUE(fs::exists(dir_ / "o" / "scores_same.csv"));

  const CliResult one = cli({"eval", "-c", cfg, "-o", out("o1"), "--model", out("o/model.json"), "--eval", "inverted"});
  ASSERT_EQ(one.code, 0) << one.err;
  EXPECT_TRUE(fs::exists(dir_ / "o1" / "scores.csv"));
  EXPECT_EQ(count_lines_with(one.out, "EER"), 1u);

  const CliResult rep = cli({"report", "--scores", out("o/scores_same.csv"), out("o/scores_inverted.csv")});
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_NE(rep.out.find("| scores_same.csv | 100 | 0.00 |"), std::string::npos) << rep.out;
  EXPECT_NE(rep.out.find("| mean | | 50.00 |"), std::string::npos) << rep.out;
}

TEST_F(CliTest, UnknownStoreInPoolIsUsageError) {
  EXPECT_EQ(cli({"train", "-c", config(), "--pool", "Z"}).code, 2);
  EXPECT_EQ(cli({"eval", "-c", config(), "--eval", "nope"}).code, 2);
}

TEST_F(CliTest, ConfigErrorsExitOne) {
  write_config("bogus_key = 1\n");
  const CliResult r = cli({"train", "-c", config()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bogus_key"), std::string::npos);
  write_config("");
  EXPECT_EQ(cli({"train", "-c", config(), "--set", "train.C=-1"}).code, 1);
}

TEST_F(CliTest, OverridesChangeTheRun) {
  ASSERT_EQ(cli({"train", "-c", config(), "-o", out("x"), "--set", "train.C=0.001"}).code, 0);
  ASSERT_EQ(cli({"train", "-c", config(), "-o", out("y")}).code, 0);
  const auto px = nlohmann::json::parse(slurp(dir_ / "x" / "train_provenance.json"));
  const auto py = nlohmann::json::parse(slurp(dir_ / "y" / "train_provenance.json"));
  EXPECT_EQ(px["train"]["C"], 0.001);
  EXPECT_NE(px["config_hash"], py["config_hash"]);
  EXPECT_NE(px["model_hash"], py["model_hash"]);
}

TEST_F(CliTest, SweepOverThreeStores) {
  const CliResult r = cli({"sweep", "-c", config(), "-o", out("s1")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(dir_ / "s1" / "sweep.csv");
  EXPECT_EQ(count_lines_with(csv, ",mean,"), 7u);
  EXPECT_EQ(count_lines_with(csv, ",E,"), 7u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 15);
  const auto prov = nlohmann::json::parse(slurp(dir_ / "s1" / "provenance.json"));
  EXPECT_EQ(prov["rows"].size(), 7u);
  EXPECT_EQ(prov["root_seed"], 11);
  EXPECT_EQ(slurp(dir_ / "s1" / "provenance.json").find(dir_.string()), std::string::npos);

  const CliResult rep = cli({"report", "--sweep", out("s1/sweep.csv"), "--top", "3"});
  ASSERT_EQ(rep.code, 0);
  EXPECT_EQ(count_lines_with(rep.out, "| 3 |"), 1u);
  EXPECT_EQ(count_lines_with(rep.out, "| 4 |"), 0u);
}

TEST_F(CliTest, ReRunsAreByteIdenticalAcrossWorkerCounts) {
  ASSERT_EQ(cli({"sweep", "-c", config(), "-o", out("r1"), "--workers", "1"}).code, 0);
  ASSERT_EQ(cli({"sweep", "-c", config(), "-o", out("r2"), "--workers", "3"}).code, 0);
  for (const char* f : {"sweep.csv", "sweep.md", "provenance.json"}) {
    EXPECT_EQ(slurp(dir_ / "r1" / f), slurp(dir_ / "r2" / f)) << f;
  }
  ASSERT_EQ(cli({"curve", "-c", config(), "-o", out("c1"), "--factors", "0.2,0.6"}).code, 0);
  ASSERT_EQ(cli({"curve", "-c", config(), "-o", out("c2"), "--factors", "0.2,0.6", "--workers", "4"}).code, 0);
  for (const char* f : {"curve.csv", "curve.md", "provenance.json"}) {
    EXPECT_EQ(slurp(dir_ / "c1" / f), slurp(dir_ / "c2" / f)) << f;
  }
}

TEST_F(CliTest, CurveAtFactorZeroMatchesBaseline) {
  write_config("pool = [\"A\", \"C\"]\n[curve]\nseeds = [0]\n");
  const CliResult r = cli({"curve", "-c", config(), "-o", out("cz"), "--factors", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(slurp(dir_ / "cz" / "curve.csv"));
  std::string line;
  std::getline(csv, line);
  std::string baseline;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 6u) << line;
    EXPECT_EQ(cells[4], "220") << line;
    if (cells[0] == "none") {
      baseline = cells[5];
    } else {
      EXPECT_EQ(cells[5], baseline) << line;
      ++rows;
    }
  }
  EXPECT_EQ(rows, 5u);
  const auto prov = nlohmann::json::parse(slurp(dir_ / "cz" / "provenance.json"));
  EXPECT_EQ(prov["pool"].get<std::string>().rfind("A+C", 0), 0u);
  EXPECT_TRUE(prov["random_seeds"].contains("0"));
}

TEST_F(CliTest, PruneThenReplayReproducesKeptSet) {
  for (const std::string strategy : {"margin_both", "random", "cluster_furthest"}) {
    const std::string o = out("p_" + strategy);
    const CliResult p = cli({"prune", "-c", config(), "-o", o, "--strategy", strategy, "--factor", "0.4"});
    ASSERT_EQ(p.code, 0) << p.err;
    // cluster strategies floor per (dataset, label) group, so they may keep a few more
    std::size_t n_kept = 0;
    ASSERT_EQ(std::sscanf(p.out.c_str() + p.out.find("kept "), "kept %zu of 300", &n_kept), 1) << p.out;
    if (strategy == "cluster_furthest") {
      EXPECT_GE(n_kept, 180u);
      EXPECT_LE(n_kept, 186u);
    } else {
      EXPECT_EQ(n_kept, 180u);
    }
    EXPECT_NE(p.out.find("EER E:"), std::string::npos);
    const std::string kept = slurp(fs::path(o) / "kept_ids.txt");
    EXPECT_EQ(count_lines_with(kept, ""), n_kept);

    const std::string o2 = out("replay_" + strategy);
    const CliResult rp = cli({"prune", "-c", config(), "-o", o2, "--replay", o + "/plan.json"});
    ASSERT_EQ(rp.code, 0) << rp.err;
    EXPECT_EQ(slurp(fs::path(o2) / "kept_ids.txt"), kept);
    EXPECT_EQ(slurp(fs::path(o2) / "model_pruned.json"), slurp(fs::path(o) / "model_pruned.json"));
  }
}

TEST_F(CliTest, ReplayRejectsTamperedPlanAndOtherPool) {
  ASSERT_EQ(cli({"prune", "-c", config(), "-o", out("p"), "--strategy", "cluster_closest", "--factor", "0.5"}).code, 0);
  PruningPlan plan = load_plan(dir_ / "p" / "plan.json");
  plan.kept_ids.pop_back();
  save_plan(plan, dir_ / "tampered.json");
  const CliResult t = cli({"prune", "-c", config(), "-o", out("t"), "--replay", out("tampered.json")});
  EXPECT_EQ(t.code, 1);
  EXPECT_NE(t.err.find("does not reproduce"), std::string::npos) << t.err;

  write_config("pool = [\"A\"]\n");
  const CliResult other = cli({"prune", "-c", config(), "-o", out("t2"), "--replay", out("p/plan.json")});
  EXPECT_EQ(other.code, 1);
  EXPECT_NE(other.err.find("different pool"), std::string::npos) << other.err;
}

TEST_F(CliTest, RandomPruneSeedsAreNamespacedAndStable) {
  auto kept = [&](const std::string& o, const std::string& seed, const std::string& root) {
    const CliResult r = cli({"prune", "-c", config(), "-o", out(o), "--strategy", "random", "--factor", "0.5",
                       "--prune-seed", seed, "--seed", root});
    EXPECT_EQ(r.code, 0) << r.err;
    return slurp(dir_ / o / "kept_ids.txt");
  };
  const std::string a = kept("k1", "1", "11");
  EXPECT_EQ(a, kept("k2", "1", "11"));
  EXPECT_NE(a, kept("k3", "2", "11"));
  EXPECT_NE(a, kept("k4", "1", "12"));
}

TEST_F(CliTest, SegmentDropsTail) {
  Waveform w;
  w.samples.assign(16000 * 25, 0.1f);
  write_wav(w, dir_ / "long.wav");
  const CliResult r = cli({"segment", out("long.wav"), "-o", out("seg")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "seg" / "long_c000.wav"));
  EXPECT_TRUE(fs::exists(dir_ / "seg" / "long_c001.wav"));
  EXPECT_FALSE(fs::exists(dir_ / "seg" / "long_c002.wav"));
  EXPECT_EQ(read_wav(dir_ / "seg" / "long_c001.wav").samples.size(), 160000u);
  const CliResult r4 = cli({"segment", out("long.wav"), "-o", out("seg4"), "--chunk", "4"});
  ASSERT_EQ(r4.code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "seg4" / "long_c005.wav"));
  EXPECT_FALSE(fs::exists(dir_ / "seg4" / "long_c006.wav"));
  EXPECT_EQ(cli({"segment", out("long.wav"), "--chunk", "0"}).code, 2);
}

TEST_F(CliTest, SegmentManifestKeepsMetadata) {
  fs::create_directories(dir_ / "audio" / "sub");
  Waveform w;
  w.samples.assign(16000 * 21, 0.2f);
  write_wav(w, dir_ / "audio" / "sub" / "x.wav");
  SampleRecord rec = testing::record("x", "D", Label::kSpoof, Split::kDev);
  rec.source_path = "sub/x.wav";
  rec.extra_json = R"({"speaker":"s1"})";
  const std::vector<SampleRecord> recs = {rec};
  write_manifest(recs, dir_ / "audio" / "manifest.jsonl");
  const CliResult r = cli({"segment", "--manifest", out("audio/manifest.jsonl"), "-o", out("segm")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto outrecs = read_manifest(dir_ / "segm" / "manifest.jsonl");
  ASSERT_EQ(outrecs.size(), 2u);
  EXPECT_EQ(outrecs[1].id, "x_c001");
  EXPECT_EQ(outrecs[1].label, Label::kSpoof);
  EXPECT_EQ(outrecs[1].split, Split::kDev);
  EXPECT_EQ(outrecs[1].duration_s, 10.0);
  EXPECT_TRUE(fs::exists(dir_ / "segm" / outrecs[1].source_path));
  const auto extra = nlohmann::json::parse(outrecs[1].extra_json);
  EXPECT_EQ(extra["speaker"], "s1");
  EXPECT_EQ(extra["segment_of"], "x");
  EXPECT_EQ(extra["segment_index"], 1);
}

TEST_F(CliTest, AugmentReplacesAndRecordsProvenance) {
  fs::create_directories(dir_ / "wav");
  std::vector<SampleRecord> recs;
  for (int i = 0; i < 6; ++i) {
    Waveform w;
    w.samples.resize(8000);
    for (std::size_t k = 0; k < w.samples.size(); ++k) w.samples[k] = 0.3f * std::sin(0.05f * k + i);
    write_wav(w, dir_ / "wav" / ("u" + std::to_string(i) + ".wav"));
    SampleRecord r = testing::record("u" + std::to_string(i), "D", i % 2 ? Label::kSpoof : Label::kBonafide);
    r.source_path = "u" + std::to_string(i) + ".wav";
    recs.push_back(r);
  }
  write_manifest(recs, dir_ / "wav" / "manifest.jsonl");
  {
    std::ofstream f(dir_ / "aug.toml");
    f << "seed = 3\n[augment_run]\nmanifest = \"wav/manifest.jsonl\"\n"
         "[[augment]]\nkind = \"impulsive\"\n[[augment]]\nkind = \"stationary_additive\"\n"
         "[[augment]]\nkind = \"lnl_convolutive\"\n";
  }
  const CliResult r = cli({"augment", "-c", (dir_ / "aug.toml").string(), "-o", out("aug")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto outrecs = read_manifest(dir_ / "aug" / "manifest.jsonl");
  EXPECT_EQ(outrecs.size(), 6u);
  const auto prov = nlohmann::json::parse(slurp(dir_ / "aug" / "augment_provenance.json"));
  EXPECT_EQ(prov["mode"], "replace");
  EXPECT_EQ(prov["ops"].size(), 3u);
  for (const auto& op : prov["ops"]) EXPECT_EQ(op["samples"], 2);

  const CliResult again = cli({"augment", "-c", (dir_ / "aug.toml").string(), "-o", out("aug2"), "--workers", "3"});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(dir_ / "aug" / "manifest.jsonl"), slurp(dir_ / "aug2" / "manifest.jsonl"));
  EXPECT_EQ(slurp(dir_ / "aug" / "audio" / "u0.wav"), slurp(dir_ / "aug2" / "audio" / "u0.wav"));

  const CliResult app = cli({"augment", "-c", (dir_ / "aug.toml").string(), "-o", out("aug3"), "--append"});
  ASSERT_EQ(app.code, 0);
  EXPECT_EQ(read_manifest(dir_ / "aug3" / "manifest.jsonl").size(), 12u);
}

}  // namespace
}  // namespace dfcurate
