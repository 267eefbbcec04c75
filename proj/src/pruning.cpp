#include "dfcurate/pruning.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "dfcurate/error.hpp"
#include "dfcurate/util.hpp"

namespace dfcurate {

namespace {

void check_factor(double factor) {
  if (!(factor >= 0.0 && factor < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "pruning factor must lie in [0, 1), got " + std::to_string(factor));
  }
}

PruningPlan finish_plan(const LabeledDataset& pool, Strategy strategy, double factor, std::uint64_t seed,
                        const std::vector<bool>& discard) {
  PruningPlan plan;
  plan.strategy = strategy;
  plan.factor = factor;
  plan.seed = seed;
  plan.pool_hash = pool_fingerprint(pool);
  plan.provenance = pool.description();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!discard[i]) plan.kept_ids.push_back(pool.id(i));
  }
  return plan;
}

// Marks the first `count` entries of `order` (already sorted by discard
// priority) as discarded.
void discard_first(const std::vector<std::size_t>& order, std::size_t count, std::vector<bool>& discard) {
  for (std::size_t k = 0; k < count; ++k) discard[order[k]] = true;
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kRandom: return "random";
    case Strategy::kClusterClosest: return "cluster_closest";
    case Strategy::kClusterFurthest: return "cluster_furthest";
    case Strategy::kMarginNoisy: return "margin_noisy";
    case Strategy::kMarginBoth: return "margin_both";
  }
  return "random";
}

Strategy parse_strategy(std::string_view text) {
  std::string t(text);
  std::replace(t.begin(), t.end(), '-', '_');
  for (Strategy s : {Strategy::kRandom, Strategy::kClusterClosest, Strategy::kClusterFurthest,
                     Strategy::kMarginNoisy, Strategy::kMarginBoth}) {
    if (t == to_string(s)) return s;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown pruning strategy '" + std::string(text) + "'");
}

bool needs_model(Strategy s) { return s == Strategy::kMarginNoisy || s == Strategy::kMarginBoth; }

std::string pool_fingerprint(const LabeledDataset& pool) {
  std::uint64_t h = fnv1a64("dim=" + std::to_string(pool.dim()));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    h = fnv1a64(pool.id(i), h);
    h = fnv1a64(pool.label(i) == Label::kSpoof ? "\x01" : "\x02", h);
  }
  return hex64(h);
}

std::string model_fingerprint(const ProbeModel& model) {
  std::uint64_t h = fnv1a64("probe");
  auto mix = [&](double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&bits), sizeof(bits)), h);
  };
  for (double v : model.w) mix(v);
  mix(model.b);
  mix(model.C);
  return hex64(h);
}

PruningPlan prune_random(const LabeledDataset& pool, double factor, std::uint64_t seed) {
  check_factor(factor);
  const std::size_t n = pool.size();
  const std::size_t d = floor_count(factor, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first d slots become a uniform sample.
  for (std::size_t k = 0; k < d; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(order[k], order[pick(rng)]);
  }
  std::vector<bool> discard(n, false);
  discard_first(order, d, discard);
  return finish_plan(pool, Strategy::kRandom, factor, seed, discard);
}

PruningPlan prune_cluster(const LabeledDataset& pool, double factor, ClusterMode mode) {
  check_factor(factor);
  std::map<GroupKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pool.size(); ++i) groups[pool.group(i)].push_back(i);

  const std::size_t dim = pool.dim();
  std::vector<bool> discard(pool.size(), false);
  std::vector<double> centroid(dim);
  std::vector<double> dist(pool.size(), 0.0);
  for (const auto& [key, members] : groups) {
    if (members.empty()) throw Error(ErrorCode::kEmptyGroup, "empty group " + key.dataset_name);
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i : members) {
      const auto row = pool.features(i);
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += row[j];
    }
    for (double& c : centroid) c /= static_cast<double>(members.size());
    for (std::size_t i : members) {
      const auto row = pool.features(i);
      double sq = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = row[j] - centroid[j];
        sq += diff * diff;
      }
      dist[i] = std::sqrt(sq);
    }
    std::vector<std::size_t> order = members;
    // closest keeps near samples, so far ones are discarded first
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return mode == ClusterMode::kClosest ? dist[a] > dist[b] : dist[a] < dist[b];
      return pool.id(a) < pool.id(b);
    });
    discard_first(order, floor_count(factor, members.size()), discard);
  }
  return finish_plan(pool, mode == ClusterMode::kClosest ? Strategy::kClusterClosest : Strategy::kClusterFurthest,
                     factor, 0, discard);
}

PruningPlan prune_margin(const LabeledDataset& pool, double factor, MarginMode mode, const ProbeModel& model) {
  check_factor(factor);
  const std::vector<double> scores = decisions(model, pool);
  const std::size_t n = pool.size();
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(scores[i]);

  std::vector<std::size_t> smallest(n);
  std::iota(smallest.begin(), smallest.end(), 0);
  std::vector<std::size_t> largest = smallest;
  std::sort(smallest.begin(), smallest.end(), [&](std::size_t a, std::size_t b) {
    if (mag[a] != mag[b]) return mag[a] < mag[b];
    return pool.id(a) < pool.id(b);
  });
  std::sort(largest.begin(), largest.end(), [&](std::size_t a, std::size_t b) {
    if (mag[a] != mag[b]) return mag[a] > mag[b];
    return pool.id(a) < pool.id(b);
  });

  const std::size_t d = floor_count(factor, n);
  std::vector<bool> discard(n, false);
  if (mode == MarginMode::kNoisy) {
    discard_first(smallest, d, discard);
  } else {
    discard_first(smallest, (d + 1) / 2, discard);
    discard_first(largest, d / 2, discard);
  }
  PruningPlan plan =
      finish_plan(pool, mode == MarginMode::kNoisy ? Strategy::kMarginNoisy : Strategy::kMarginBoth, factor, 0, discard);
  plan.model_hash = model_fingerprint(model);

  bool any_spoof = false, any_bona = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (discard[i]) continue;
    (pool.label(i) == Label::kSpoof ? any_spoof : any_bona) = true;
  }
  if (n > 0 && !(any_spoof && any_bona)) {
    throw Error(ErrorCode::kSingleClass, std::string(to_string(plan.strategy)) + " at factor " +
                                             std::to_string(factor) + " removed every sample of one class");
  }
  return plan;
}

PruningPlan make_plan(const LabeledDataset& pool, Strategy strategy, double factor, std::uint64_t seed,
                      const ProbeModel* model) {
  switch (strategy) {
    case Strategy::kRandom: return prune_random(pool, factor, seed);
    case Strategy::kClusterClosest: return prune_cluster(pool, factor, ClusterMode::kClosest);
    case Strategy::kClusterFurthest: return prune_cluster(pool, factor, ClusterMode::kFurthest);
    case Strategy::kMarginNoisy:
    case Strategy::kMarginBoth:
      if (!model) throw Error(ErrorCode::kInvalidArgument, "margin pruning needs a trained probe");
      return prune_margin(pool, factor, strategy == Strategy::kMarginNoisy ? MarginMode::kNoisy : MarginMode::kBoth,
                          *model);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown strategy");
}

LabeledDataset apply_plan(const LabeledDataset& pool, const PruningPlan& plan) {
  std::unordered_set<std::string_view> kept;
  kept.reserve(plan.kept_ids.size());
  for (const auto& id : plan.kept_ids) {
    if (!pool.index_of(id)) throw Error(ErrorCode::kUnknownId, "plan id '" + id + "' is not in the pool");
    if (!kept.insert(id).second) throw Error(ErrorCode::kDuplicateId, "plan lists id '" + id + "' twice");
  }
  std::vector<std::size_t> indices;
  indices.reserve(kept.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (kept.contains(pool.id(i))) indices.push_back(i);
  }
  LabeledDataset out = pool.subset(indices);
  out.set_description(pool.description() + " | " + std::string(to_string(plan.strategy)) + "@" +
                      std::to_string(plan.factor));
  return out;
}

std::string plan_to_json(const PruningPlan& plan) {
  nlohmann::ordered_json j;
  j["format"] = "dfcurate-plan";
  j["version"] = 1;
  j["strategy"] = to_string(plan.strategy);
  j["factor"] = plan.factor;
  j["seed"] = plan.seed;
  j["pool_hash"] = plan.pool_hash;
  j["provenance"] = plan.provenance;
  if (!plan.model_hash.empty()) j["model_hash"] = plan.model_hash;
  j["kept_count"] = plan.kept_ids.size();
  j["kept_ids"] = plan.kept_ids;
  return j.dump(2);
}

PruningPlan plan_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "dfcurate-plan") throw Error(ErrorCode::kFormat, "not a pruning plan");
    if (j.at("version") != 1) throw Error(ErrorCode::kFormat, "unsupported plan version");
    PruningPlan plan;
    plan.strategy = parse_strategy(j.at("strategy").get<std::string>());
    plan.factor = j.at("factor").get<double>();
    check_factor(plan.factor);
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.pool_hash = j.value("pool_hash", std::string());
    plan.provenance = j.value("provenance", std::string());
    plan.model_hash = j.value("model_hash", std::string());
    plan.kept_ids = j.at("kept_ids").get<std::vector<std::string>>();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("plan file: ") + e.what());
  }
}

void save_plan(const PruningPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  out << plan_to_json(plan) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

PruningPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return plan_from_json(s.str());
}

}  // namespace dfcurate
