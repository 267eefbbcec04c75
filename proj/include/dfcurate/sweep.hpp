#pragma once

// Exhaustive dataset-combination sweeps and pruning curves.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dfcurate/embedding_store.hpp"
#include "dfcurate/metrics.hpp"
#include "dfcurate/probe.hpp"
#include "dfcurate/pruning.hpp"

namespace dfcurate {

inline constexpr std::size_t kMaxSweepDatasets = 20;

struct NamedStore {
  std::string name;
  std::shared_ptr<const DatasetStore> store;
};

struct EvalSet {
  std::string name;
  LabeledDataset pool;
};

std::vector<EvalSet> make_eval_sets(std::span<const NamedStore> stores);

// Bitmasks 1 .. 2^n - 1 in ascending order; bit k selects dataset k.
std::vector<std::uint64_t> enumerate_masks(std::size_t n);
std::vector<std::vector<std::string>> enumerate_combinations(std::span<const std::string> names);

struct EvalScore {
  std::string eval_set;
  double eer = 0.0;  // fraction
};

struct SweepRow {
  std::uint64_t mask = 0;
  std::vector<std::string> combination;
  std::vector<EvalScore> per_eval_eer;  // eval-set order as given
  double mean_eer = 0.0;
  std::string error;  // non-empty when the combination failed

  // provenance
  std::size_t pool_size = 0;
  std::string pool_hash;
  std::string model_hash;
  bool converged = false;

  bool ok() const noexcept { return error.empty(); }
  std::string combination_name() const;  // "A+B+C"
};

struct SweepOptions {
  TrainOptions train;
  std::size_t workers = 1;
  // Absent means every split of every store is used.
  std::optional<std::set<Split>> split_filter;
};

// Scores every eval set with the model and returns per-set EER.
std::vector<EvalScore> evaluate(const ProbeModel& model, std::span<const EvalSet> eval_sets);

// Trains and evaluates one combination. Errors are captured in the row.
SweepRow run_combination(std::span<const NamedStore> stores, std::span<const EvalSet> eval_sets,
                         std::uint64_t mask, const SweepOptions& opts);

// All 2^N - 1 combinations, sorted by mean EER ascending (failed rows last,
// ties in mask order).
std::vector<SweepRow> run_sweep(std::span<const NamedStore> stores, std::span<const EvalSet> eval_sets,
                                const SweepOptions& opts);

struct CurveRow {
  std::string strategy;  // "none" for the unpruned baseline
  double factor = 0.0;
  std::string eval_set;
  double eer = 0.0;
  std::optional<std::uint64_t> seed;  // random strategy only
  bool seed_mean = false;             // mean of the random rows over seeds
  std::size_t kept = 0;
  std::string plan_hash;
  std::string error;
};

struct CurveOptions {
  TrainOptions train;
  std::vector<Strategy> strategies;
  std::vector<double> factors;
  std::vector<std::uint64_t> seeds = {0};  // random strategy
  std::size_t workers = 1;
};

std::vector<double> default_factor_grid();  // 0.1, 0.2, ..., 0.9

// Baseline rows first, then (strategy, factor[, seed]) points in grid order.
// The margin model is the baseline model, trained once on the unpruned pool.
std::vector<CurveRow> run_pruning_curve(const LabeledDataset& base_pool, std::span<const EvalSet> eval_sets,
                                        const CurveOptions& opts);

// Report writers
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);
std::string sweep_markdown(std::span<const SweepRow> rows, std::span<const std::string> dataset_names,
                           std::span<const std::string> eval_names);
void write_curve_csv(const std::filesystem::path& path, std::span<const CurveRow> rows);
std::string curve_markdown(std::span<const CurveRow> rows);

}  // namespace dfcurate
