#include "dfcurate/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "dfcurate/error.hpp"
#include "dfcurate/parallel.hpp"
#include "dfcurate/util.hpp"

namespace dfcurate {

namespace {

std::string percent(double fraction, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << 100.0 * fraction;
  return s.str();
}

std::string format_factor(double f) {
  std::ostringstream s;
  s << std::setprecision(6) << f;
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

std::vector<EvalSet> make_eval_sets(std::span<const NamedStore> stores) {
  std::vector<EvalSet> out;
  for (const auto& s : stores) {
    std::vector<std::shared_ptr<const DatasetStore>> one = {s.store};
    EvalSet e{s.name, merge_pool(one)};
    if (!e.pool.has_both_classes()) {
      throw Error(ErrorCode::kSingleClass, "eval set '" + s.name + "' needs both classes");
    }
    e.pool.set_description(s.name);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::uint64_t> enumerate_masks(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one dataset");
  if (n > kMaxSweepDatasets) {
    throw Error(ErrorCode::kInvalidArgument, "exhaustive sweep is limited to " +
                                                 std::to_string(kMaxSweepDatasets) + " datasets");
  }
  std::vector<std::uint64_t> masks;
  masks.reserve((1ULL << n) - 1);
  for (std::uint64_t m = 1; m < (1ULL << n); ++m) masks.push_back(m);
  return masks;
}

std::vector<std::vector<std::string>> enumerate_combinations(std::span<const std::string> names) {
  std::vector<std::vector<std::string>> out;
  for (std::uint64_t m : enumerate_masks(names.size())) {
    std::vector<std::string> combo;
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (m & (1ULL << k)) combo.push_back(names[k]);
    }
    out.push_back(std::move(combo));
  }
  return out;
}

std::string SweepRow::combination_name() const {
  std::string out;
  for (const auto& name : combination) {
    if (!out.empty()) out += '+';
    out += name;
  }
  return out;
}

std::vector<EvalScore> evaluate(const ProbeModel& model, std::span<const EvalSet> eval_sets) {
  std::vector<EvalScore> out;
  out.reserve(eval_sets.size());
  for (const auto& e : eval_sets) {
    ScoreSet s;
    s.scores = decisions(model, e.pool);
    s.labels.reserve(e.pool.size());
    for (std::size_t i = 0; i < e.pool.size(); ++i) s.labels.push_back(e.pool.label(i));
    out.push_back({e.name, eer(s).eer});
  }
  return out;
}

SweepRow run_combination(std::span<const NamedStore> stores, std::span<const EvalSet> eval_sets,
                         std::uint64_t mask, const SweepOptions& opts) {
  SweepRow row;
  row.mask = mask;
  std::vector<std::shared_ptr<const DatasetStore>> selected;
  for (std::size_t k = 0; k < stores.size(); ++k) {
    if (mask & (1ULL << k)) {
      row.combination.push_back(stores[k].name);
      selected.push_back(stores[k].store);
    }
  }
  row.mean_eer = nan();
  try {
    LabeledDataset pool = merge_pool(selected, opts.split_filter);
    pool.set_description(row.combination_name());
    row.pool_size = pool.size();
    row.pool_hash = pool_fingerprint(pool);
    const ProbeModel model = train(pool, opts.train);
    row.model_hash = model_fingerprint(model);
    row.converged = model.converged;
    row.per_eval_eer = evaluate(model, eval_sets);
    std::vector<double> values;
    for (const auto& e : row.per_eval_eer) values.push_back(e.eer);
    row.mean_eer = mean_eer(values);
  } catch (const std::exception& e) {
    row.error = e.what();
    row.per_eval_eer.clear();
    row.mean_eer = nan();
  }
  return row;
}

std::vector<SweepRow> run_sweep(std::span<const NamedStore> stores, std::span<const EvalSet> eval_sets,
                                const SweepOptions& opts) {
  validate_options(opts.train);
  if (eval_sets.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep needs at least one eval set");
  for (std::size_t k = 1; k < stores.size(); ++k) {
    if (stores[k].store->matrix.dim() != stores[0].store->matrix.dim()) {
      throw Error(ErrorCode::kDimMismatch, "store '" + stores[k].name + "' has a different dim");
    }
  }
  for (const auto& e : eval_sets) {
    if (!stores.empty() && e.pool.dim() != stores[0].store->matrix.dim()) {
      throw Error(ErrorCode::kDimMismatch, "eval set '" + e.name + "' has a different dim");
    }
  }
  const auto masks = enumerate_masks(stores.size());
  std::vector<SweepRow> rows(masks.size());
  parallel_for(masks.size(), opts.workers,
               [&](std::size_t i) { rows[i] = run_combination(stores, eval_sets, masks[i], opts); });
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.ok() != b.ok()) return a.ok();
    if (!a.ok()) return false;
    return a.mean_eer < b.mean_eer;
  });
  return rows;
}

std::vector<double> default_factor_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 9; ++k) grid.push_back(k / 10.0);
  return grid;
}

std::vector<CurveRow> run_pruning_curve(const LabeledDataset& base_pool, std::span<const EvalSet> eval_sets,
                                        const CurveOptions& opts) {
  validate_options(opts.train);
  for (double f : opts.factors) {
    if (!(f >= 0.0 && f < 1.0)) throw Error(ErrorCode::kInvalidArgument, "pruning factor outside [0, 1)");
  }
  const ProbeModel base_model = train(base_pool, opts.train);
  const auto base_scores = evaluate(base_model, eval_sets);

  std::vector<CurveRow> rows;
  for (const auto& s : base_scores) {
    CurveRow r;
    r.strategy = "none";
    r.eval_set = s.eval_set;
    r.eer = s.eer;
    r.kept = base_pool.size();
    rows.push_back(std::move(r));
  }

  struct Point {
    Strategy strategy;
    double factor;
    std::optional<std::uint64_t> seed;
  };
  std::vector<Point> points;
  for (Strategy s : opts.strategies) {
    for (double f : opts.factors) {
      if (s == Strategy::kRandom) {
        for (std::uint64_t seed : opts.seeds) points.push_back({s, f, seed});
      } else {
        points.push_back({s, f, std::nullopt});
      }
    }
  }

  std::vector<std::vector<CurveRow>> results(points.size());
  parallel_for(points.size(), opts.workers, [&](std::size_t i) {
    const Point& p = points[i];
    std::vector<CurveRow>& out = results[i];
    auto base_row = [&](const std::string& eval_name) {
      CurveRow r;
      r.strategy = std::string(to_string(p.strategy));
      r.factor = p.factor;
      r.eval_set = eval_name;
      r.seed = p.seed;
      return r;
    };
    try {
      const PruningPlan plan = make_plan(base_pool, p.strategy, p.factor, p.seed.value_or(0), &base_model);
      const LabeledDataset pruned = apply_plan(base_pool, plan);
      const ProbeModel model = train(pruned, opts.train);
      const std::string plan_hash = hex64(fnv1a64(plan_to_json(plan)));
      for (const auto& s : evaluate(model, eval_sets)) {
        CurveRow r = base_row(s.eval_set);
        r.eer = s.eer;
        r.kept = pruned.size();
        r.plan_hash = plan_hash;
        out.push_back(std::move(r));
      }
    } catch (const std::exception& e) {
      for (const auto& es : eval_sets) {
        CurveRow r = base_row(es.name);
        r.eer = nan();
        r.error = e.what();
        out.push_back(std::move(r));
      }
    }
  });

  for (std::size_t i = 0; i < points.size(); ++i) {
    rows.insert(rows.end(), results[i].begin(), results[i].end());
    const Point& p = points[i];
    const bool last_seed = p.strategy == Strategy::kRandom && opts.seeds.size() > 1 && p.seed == opts.seeds.back();
    if (!last_seed) continue;
    // Append the over-seeds mean for this (random, factor) point.
    for (const auto& es : eval_sets) {
      double sum = 0.0;
      std::size_t n = 0;
      bool failed = false;
      for (std::size_t k = 0; k < opts.seeds.size(); ++k) {
        for (const auto& r : results[i + 1 - opts.seeds.size() + k]) {
          if (r.eval_set != es.name) continue;
          if (!r.error.empty()) failed = true;
          sum += r.eer;
          ++n;
        }
      }
      CurveRow m;
      m.strategy = std::string(to_string(Strategy::kRandom));
      m.factor = p.factor;
      m.eval_set = es.name;
      m.seed_mean = true;
      m.eer = failed || n == 0 ? nan() : sum / static_cast<double>(n);
      if (failed) m.error = "one or more seeds failed";
      rows.push_back(std::move(m));
    }
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  std::ostringstream s;
  s << "combination,eval_set,eer\n";
  for (const auto& row : rows) {
    if (!row.ok()) {
      s << row.combination_name() << ",ERROR,nan\n";
      continue;
    }
    for (const auto& e : row.per_eval_eer) {
      s << row.combination_name() << ',' << e.eval_set << ',' << percent(e.eer, 6) << '\n';
    }
    s << row.combination_name() << ",mean," << percent(row.mean_eer, 6) << '\n';
  }
  write_text(path, s.str());
}

std::string sweep_markdown(std::span<const SweepRow> rows, std::span<const std::string> dataset_names,
                           std::span<const std::string> eval_names) {
  // Best row per combination size, like a "best subset of N" table.
  std::map<std::size_t, const SweepRow*> best;
  for (const auto& row : rows) {
    if (!row.ok()) continue;
    auto& slot = best[row.combination.size()];
    if (!slot || row.mean_eer < slot->mean_eer) slot = &row;
  }
  std::ostringstream s;
  s << "| # datasets |";
  for (const auto& n : dataset_names) s << ' ' << n << " |";
  for (const auto& n : eval_names) s << ' ' << n << " |";
  s << " Mean |\n|---|";
  for (std::size_t k = 0; k < dataset_names.size() + eval_names.size(); ++k) s << "---|";
  s << "---|\n";
  for (const auto& [size, row] : best) {
    s << "| " << size << " |";
    for (const auto& n : dataset_names) {
      const bool in = std::find(row->combination.begin(), row->combination.end(), n) != row->combination.end();
      s << (in ? " x |" : "   |");
    }
    for (const auto& n : eval_names) {
      auto it = std::find_if(row->per_eval_eer.begin(), row->per_eval_eer.end(),
                             [&](const EvalScore& e) { return e.eval_set == n; });
      s << ' ' << (it == row->per_eval_eer.end() ? std::string("-") : percent(it->eer)) << " |";
    }
    s << ' ' << percent(row->mean_eer) << " |\n";
  }
  s << "\nEER in percent. Best combination per number of training datasets; "
    << rows.size() << " combinations evaluated.\n";
  return s.str();
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurveRow> rows) {
  std::ostringstream s;
  s << "strategy,factor,eval_set,seed,kept,eer\n";
  for (const auto& r : rows) {
    s << r.strategy << ',' << format_factor(r.factor) << ',' << r.eval_set << ',';
    if (r.seed_mean) {
      s << "mean";
    } else if (r.seed) {
      s << *r.seed;
    }
    s << ',' << r.kept << ',' << (r.error.empty() ? percent(r.eer, 6) : std::string("nan")) << '\n';
  }
  write_text(path, s.str());
}

std::string curve_markdown(std::span<const CurveRow> rows) {
  std::vector<std::string> evals;
  for (const auto& r : rows) {
    if (std::find(evals.begin(), evals.end(), r.eval_set) == evals.end()) evals.push_back(r.eval_set);
  }
  // Pick one row per (strategy, factor, eval): the seed mean when present,
  // else the single row.
  std::vector<std::pair<std::string, double>> keys;
  std::map<std::pair<std::string, double>, std::map<std::string, const CurveRow*>> table;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.strategy, r.factor);
    if (!table.contains(key)) keys.push_back(key);
    auto& slot = table[key][r.eval_set];
    if (!slot || r.seed_mean) slot = &r;
  }
  std::ostringstream s;
  s << "| strategy | factor |";
  for (const auto& e : evals) s << ' ' << e << " |";
  s << "\n|---|---|";
  for (std::size_t k = 0; k < evals.size(); ++k) s << "---|";
  s << '\n';
  for (const auto& key : keys) {
    s << "| " << key.first << " | " << format_factor(key.second) << " |";
    for (const auto& e : evals) {
      const CurveRow* r = table[key][e];
      s << ' ' << (r && r->error.empty() ? percent(r->eer) : std::string("-")) << " |";
    }
    s << '\n';
  }
  s << "\nEER in percent. Random-pruning cells average over seeds.\n";
  return s.str();
}

}  // namespace dfcurate
