#pragma once

// Training-sample pruning. Every strategy produces a PruningPlan holding the
// kept ids in pool order; the factor is the fraction of samples DISCARDED.
//
// Discard counts use floor(factor * size): per (dataset, label) group for the
// cluster strategies, over the whole pool for random and margin strategies.
// Equal distances or margins are broken by ascending id.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dfcurate/embedding_store.hpp"
#include "dfcurate/probe.hpp"

namespace dfcurate {

enum class Strategy { kRandom, kClusterClosest, kClusterFurthest, kMarginNoisy, kMarginBoth };
enum class ClusterMode { kClosest, kFurthest };
enum class MarginMode { kNoisy, kBoth };

std::string_view to_string(Strategy s);
// Accepts "margin_both" and "margin-both" spellings.
Strategy parse_strategy(std::string_view text);
bool needs_model(Strategy s);

struct PruningPlan {
  Strategy strategy = Strategy::kRandom;
  double factor = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> kept_ids;
  std::string pool_hash;    // fingerprint of the pool the plan was drawn from
  std::string provenance;   // human-readable pool description
  std::string model_hash;   // margin strategies only

  bool operator==(const PruningPlan&) const = default;
};

// Hash over (dim, ordered ids, labels).
std::string pool_fingerprint(const LabeledDataset& pool);

PruningPlan prune_random(const LabeledDataset& pool, double factor, std::uint64_t seed);
PruningPlan prune_cluster(const LabeledDataset& pool, double factor, ClusterMode mode);
PruningPlan prune_margin(const LabeledDataset& pool, double factor, MarginMode mode,
                         const ProbeModel& model);

// Dispatches on strategy; margin strategies require a model.
PruningPlan make_plan(const LabeledDataset& pool, Strategy strategy, double factor,
                      std::uint64_t seed, const ProbeModel* model = nullptr);

// Restricts the pool to plan.kept_ids, keeping pool order.
LabeledDataset apply_plan(const LabeledDataset& pool, const PruningPlan& plan);

std::string plan_to_json(const PruningPlan& plan);
PruningPlan plan_from_json(const std::string& text);
void save_plan(const PruningPlan& plan, const std::filesystem::path& path);
PruningPlan load_plan(const std::filesystem::path& path);

std::string model_fingerprint(const ProbeModel& model);

}  // namespace dfcurate
