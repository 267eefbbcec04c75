#include "dfcurate/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "dfcurate/augment.hpp"
#include "dfcurate/config.hpp"
#include "dfcurate/error.hpp"
#include "dfcurate/metrics.hpp"
#include "dfcurate/probe.hpp"
#include "dfcurate/pruning.hpp"
#include "dfcurate/sweep.hpp"
#include "dfcurate/util.hpp"
#include "dfcurate/version.hpp"

namespace dfcurate {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "Run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set train.C=1e4")->take_all();
  cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "Root seed");
  cmd->add_option("-o,--out", c.out_dir, "Output directory");
}

RunConfig config_from(const Common& c, bool required = true) {
  std::vector<std::string> overrides = c.overrides;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  RunConfig cfg;
  if (c.config.empty()) {
    if (required) throw UsageError("--config is required for this command");
    TomlTable t;
    for (const auto& o : overrides) apply_override(t, o);
    cfg = build_config(t, fs::current_path());
  } else {
    cfg = load_config(c.config, overrides);
  }
  if (c.workers) cfg.workers = *c.workers;
  if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
  return cfg;
}

std::string pct(double fraction) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * fraction;
  return s.str();
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream s(item);
    std::string part;
    while (std::getline(s, part, ',')) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

// Seeds reach every subsystem through a namespaced derivation of the root.
std::uint64_t seed_for(const RunConfig& cfg, const std::string& ns) { return derive_seed(cfg.seed, ns); }

nlohmann::ordered_json provenance(const RunConfig& cfg, const std::string& command) {
  nlohmann::ordered_json p;
  p["tool"] = "dfcurate";
  p["version"] = kVersion;
  p["command"] = command;
  p["config_hash"] = cfg.config_hash;
  p["root_seed"] = cfg.seed;
  p["train"] = {{"C", cfg.train.C},
                {"tol", cfg.train.tol},
                {"max_iter", cfg.train.max_iter},
                {"penalize_bias", cfg.train.penalize_bias},
                {"standardize", cfg.train.standardize},
                {"options_hash", hex64(options_hash(cfg.train))}};
  if (cfg.split_filter) {
    std::vector<std::string> splits;
    for (Split s : *cfg.split_filter) splits.emplace_back(to_string(s));
    p["splits"] = splits;
  } else {
    p["splits"] = "all";
  }
  return p;
}

void write_provenance(const RunConfig& cfg, const nlohmann::ordered_json& p, const std::string& name = "provenance.json") {
  write_text(cfg.out_dir / name, p.dump(2) + "\n");
}

struct Loaded {
  std::vector<NamedStore> stores;
  std::vector<EvalSet> evals;
};

std::vector<NamedStore> load_named(const std::vector<std::pair<std::string, fs::path>>& entries) {
  std::vector<NamedStore> out;
  for (const auto& [name, path] : entries) {
    try {
      out.push_back({name, load_store(path)});
    } catch (const Error& e) {
      throw Error(e.code(), name + " (" + path.string() + "): " + e.what());
    }
  }
  return out;
}

std::vector<NamedStore> select_stores(const std::vector<NamedStore>& all, const std::vector<std::string>& names) {
  if (names.empty()) return all;
  std::vector<NamedStore> out;
  for (const auto& n : names) {
    auto it = std::find_if(all.begin(), all.end(), [&](const NamedStore& s) { return s.name == n; });
    if (it == all.end()) throw UsageError("unknown store '" + n + "'");
    out.push_back(*it);
  }
  return out;
}

LabeledDataset training_pool(const RunConfig& cfg, const std::vector<NamedStore>& selected) {
  if (selected.empty()) throw Error(ErrorCode::kConfig, "no training stores configured");
  std::vector<std::shared_ptr<const DatasetStore>> raw;
  std::string desc;
  for (const auto& s : selected) {
    raw.push_back(s.store);
    desc += (desc.empty() ? "" : "+") + s.name;
  }
  LabeledDataset pool = merge_pool(raw, cfg.split_filter);
  pool.set_description(desc);
  return pool;
}

std::vector<EvalSet> eval_sets_of(const RunConfig& cfg, const std::vector<std::string>& only = {}) {
  std::vector<std::pair<std::string, fs::path>> entries;
  for (const auto& e : cfg.eval_sets) {
    if (only.empty() || std::find(only.begin(), only.end(), e.first) != only.end()) entries.push_back(e);
  }
  for (const auto& n : only) {
    if (std::none_of(cfg.eval_sets.begin(), cfg.eval_sets.end(), [&](const auto& e) { return e.first == n; })) {
      throw UsageError("unknown eval set '" + n + "'");
    }
  }
  const auto named = load_named(entries);
  return make_eval_sets(named);
}

void print_eers(std::ostream& out, const std::vector<EvalScore>& scores) {
  std::vector<double> values;
  for (const auto& s : scores) {
    out << "EER " << s.eval_set << ": " << pct(s.eer) << "%\n";
    values.push_back(s.eer);
  }
  if (values.size() > 1) out << "EER mean: " << pct(mean_eer(values)) << "%\n";
}

// ---------------------------------------------------------------- validate

int cmd_validate(const Common& c, const std::vector<std::string>& dirs, std::ostream& out, std::ostream& err) {
  std::vector<std::pair<std::string, fs::path>> entries;
  if (!c.config.empty()) {
    const RunConfig cfg = config_from(c);
    entries = cfg.stores;
    entries.insert(entries.end(), cfg.eval_sets.begin(), cfg.eval_sets.end());
  }
  for (const auto& d : dirs) entries.emplace_back(fs::path(d).filename().string(), fs::path(d));
  if (entries.empty()) throw UsageError("nothing to validate: pass store directories or --config");

  bool all_ok = true;
  std::set<fs::path> seen;
  for (const auto& [name, path] : entries) {
    if (!seen.insert(fs::weakly_canonical(path)).second) continue;
    try {
      const DatasetStore s = read_store(path);
      out << "ok   " << name << "  " << path.string() << "  n=" << s.manifest.size() << " dim=" << s.matrix.dim()
          << '\n';
      std::map<std::pair<Label, Split>, std::size_t> counts;
      for (const auto& r : s.manifest) ++counts[{r.label, r.split}];
      for (Label l : {Label::kBonafide, Label::kSpoof}) {
        out << "     " << std::left << std::setw(9) << to_string(l);
        for (Split sp : {Split::kTrain, Split::kDev, Split::kEval}) {
          const auto it = counts.find({l, sp});
          out << ' ' << to_string(sp) << '=' << (it == counts.end() ? 0 : it->second);
        }
        out << '\n';
      }
    } catch (const Error& e) {
      all_ok = false;
      err << "FAIL " << name << "  " << path.string() << ": [" << to_string(e.code()) << "] " << e.what() << '\n';
    }
  }
  return all_ok ? 0 : 1;
}

// ------------------------------------------------------------- train / eval

int cmd_train(const Common& c, const std::vector<std::string>& pool_arg, std::string model_path, std::ostream& out) {
  RunConfig cfg = config_from(c);
  const auto names = pool_arg.empty() ? cfg.pool : split_list(pool_arg);
  const auto stores = select_stores(load_named(cfg.stores), names);
  const LabeledDataset pool = training_pool(cfg, stores);
  const ProbeModel model = train(pool, cfg.train);
  if (model_path.empty()) model_path = (cfg.out_dir / "model.json").string();
  fs::create_directories(fs::absolute(model_path).parent_path());
  save_model(model, model_path);

  auto p = provenance(cfg, "train");
  p["pool"] = pool.description();
  p["pool_size"] = pool.size();
  p["pool_hash"] = pool_fingerprint(pool);
  p["model_hash"] = model_fingerprint(model);
  p["converged"] = model.converged;
  p["outputs"] = {fs::path(model_path).filename().string()};
  write_provenance(cfg, p, "train_provenance.json");

  out << "trained on " << pool.description() << " (n=" << pool.size() << ", dim=" << pool.dim() << "): "
      << (model.converged ? "converged" : "NOT converged") << " after " << model.iterations
      << " iterations, objective " << std::setprecision(10) << model.objective << '\n';
  out << "model written to " << model_path << '\n';
  return model.converged ? 0 : 1;
}

int cmd_eval(const Common& c, std::string model_path, const std::vector<std::string>& only, std::ostream& out) {
  RunConfig cfg = config_from(c);
  const auto evals = eval_sets_of(cfg, split_list(only));
  if (model_path.empty()) model_path = (cfg.out_dir / "model.json").string();
  const ProbeModel model = load_model(model_path);
  if (evals.empty()) throw Error(ErrorCode::kConfig, "no eval sets configured");
  fs::create_directories(cfg.out_dir);

  std::vector<EvalScore> results;
  std::vector<std::string> outputs;
  for (const auto& e : evals) {
    ScoreSet s;
    s.scores = decisions(model, e.pool);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < e.pool.size(); ++i) {
      s.labels.push_back(e.pool.label(i));
      ids.push_back(e.pool.id(i));
    }
    const std::string file = evals.size() == 1 ? "scores.csv" : "scores_" + e.name + ".csv";
    write_scores_csv(cfg.out_dir / file, ids, s);
    outputs.push_back(file);
    results.push_back({e.name, eer(s).eer});
  }
  auto p = provenance(cfg, "eval");
  p["model_hash"] = model_fingerprint(model);
  p["outputs"] = outputs;
  nlohmann::ordered_json eers;
  for (const auto& r : results) eers[r.eval_set] = r.eer;
  p["eer"] = eers;
  write_provenance(cfg, p, "eval_provenance.json");
  print_eers(out, results);
  return 0;
}

// ------------------------------------------------------------------- sweep

int cmd_sweep(const Common& c, std::ostream& out) {
  RunConfig cfg = config_from(c);
  const auto stores = load_named(cfg.stores);
  if (stores.empty()) throw Error(ErrorCode::kConfig, "sweep needs [stores]");
  const auto evals = eval_sets_of(cfg);
  SweepOptions o;
  o.train = cfg.train;
  o.workers = cfg.workers;
  o.split_filter = cfg.split_filter;
  const auto rows = run_sweep(stores, evals, o);

  fs::create_directories(cfg.out_dir);
  write_sweep_csv(cfg.out_dir / "sweep.csv", rows);
  std::vector<std::string> names, eval_names;
  for (const auto& s : stores) names.push_back(s.name);
  for (const auto& e : evals) eval_names.push_back(e.name);
  write_text(cfg.out_dir / "sweep.md", sweep_markdown(rows, names, eval_names));

  auto p = provenance(cfg, "sweep");
  p["stores"] = names;
  p["eval_sets"] = eval_names;
  nlohmann::ordered_json per_row = nlohmann::ordered_json::array();
  std::size_t failed = 0;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["combination"] = r.combination_name();
    j["mask"] = r.mask;
    j["pool_size"] = r.pool_size;
    j["pool_hash"] = r.pool_hash;
    if (r.ok()) {
      j["model_hash"] = r.model_hash;
      j["converged"] = r.converged;
      nlohmann::ordered_json e;
      for (const auto& s : r.per_eval_eer) e[s.eval_set] = s.eer;
      j["eer"] = e;
      j["mean_eer"] = r.mean_eer;
    } else {
      j["error"] = r.error;
      ++failed;
    }
    per_row.push_back(j);
  }
  p["rows"] = per_row;
  p["outputs"] = {"sweep.csv", "sweep.md"};
  write_provenance(cfg, p);

  out << rows.size() << " combinations evaluated";
  if (failed) out << ", " << failed << " failed";
  out << '\n';
  for (std::size_t i = 0; i < std::min<std::size_t>(rows.size(), 5); ++i) {
    if (!rows[i].ok()) break;
    out << "  " << pct(rows[i].mean_eer) << "%  " << rows[i].combination_name() << '\n';
  }
  return failed == 0 ? 0 : 1;
}

// ------------------------------------------------------------------- curve

int cmd_curve(const Common& c, const std::vector<std::string>& strategies, const std::vector<double>& factors,
              std::ostream& out) {
  RunConfig cfg = config_from(c);
  const auto stores = select_stores(load_named(cfg.stores), cfg.pool);
  const LabeledDataset pool = training_pool(cfg, stores);
  const auto evals = eval_sets_of(cfg);
  CurveOptions o;
  o.train = cfg.train;
  o.workers = cfg.workers;
  o.strategies = cfg.curve.strategies;
  if (!strategies.empty()) {
    o.strategies.clear();
    for (const auto& s : split_list(strategies)) o.strategies.push_back(parse_strategy(s));
  }
  o.factors = factors.empty() ? cfg.curve.factors : factors;
  if (o.factors.empty()) o.factors = default_factor_grid();
  o.seeds.clear();
  nlohmann::ordered_json seed_map;
  for (std::uint64_t s : cfg.curve.seeds) {
    const std::uint64_t derived = seed_for(cfg, "curve/random/" + std::to_string(s));
    o.seeds.push_back(derived);
    seed_map[std::to_string(s)] = derived;
  }
  const auto rows = run_pruning_curve(pool, evals, o);

  fs::create_directories(cfg.out_dir);
  write_curve_csv(cfg.out_dir / "curve.csv", rows);
  write_text(cfg.out_dir / "curve.md", curve_markdown(rows));
  auto p = provenance(cfg, "curve");
  p["pool"] = pool.description();
  p["pool_hash"] = pool_fingerprint(pool);
  std::vector<std::string> names;
  for (Strategy s : o.strategies) names.emplace_back(to_string(s));
  p["strategies"] = names;
  p["factors"] = o.factors;
  p["random_seeds"] = seed_map;
  p["outputs"] = {"curve.csv", "curve.md"};
  std::size_t failed = 0;
  for (const auto& r : rows) failed += !r.error.empty();
  p["failed_rows"] = failed;
  write_provenance(cfg, p);
  out << rows.size() << " curve rows written to " << (cfg.out_dir / "curve.csv").string() << '\n';
  if (failed) out << failed << " rows failed; see curve.csv\n";
  return failed == 0 ? 0 : 1;
}

// ------------------------------------------------------------------- prune

std::string kept_text(const PruningPlan& plan) {
  std::string s;
  for (const auto& id : plan.kept_ids) s += id + '\n';
  return s;
}

int cmd_prune(const Common& c, std::optional<std::string> strategy_arg, std::optional<double> factor_arg,
              std::optional<std::uint64_t> prune_seed_arg, const std::string& replay, std::ostream& out,
              std::ostream& err) {
  RunConfig cfg = config_from(c);
  const auto stores = select_stores(load_named(cfg.stores), cfg.pool);
  const LabeledDataset pool = training_pool(cfg, stores);

  PruningPlan plan;
  ProbeModel base_model;
  bool have_base = false;
  auto base = [&]() -> const ProbeModel& {
    if (!have_base) {
      base_model = train(pool, cfg.train);
      have_base = true;
    }
    return base_model;
  };

  if (!replay.empty()) {
    const PruningPlan stored = load_plan(replay);
    if (stored.pool_hash != pool_fingerprint(pool)) {
      err << "plan was drawn from a different pool (hash " << stored.pool_hash << ", current "
          << pool_fingerprint(pool) << ")\n";
      return 1;
    }
    const PruningPlan redrawn = make_plan(pool, stored.strategy, stored.factor, stored.seed,
                                          needs_model(stored.strategy) ? &base() : nullptr);
    if (redrawn.kept_ids != stored.kept_ids) {
      err << "re-drawing " << to_string(stored.strategy) << " at factor " << stored.factor
          << " does not reproduce the stored kept set\n";
      return 1;
    }
    plan = stored;
  } else {
    const Strategy strategy = strategy_arg ? parse_strategy(*strategy_arg) : cfg.prune.strategy;
    const double factor = factor_arg.value_or(cfg.prune.factor);
    const std::uint64_t user_seed = prune_seed_arg.value_or(cfg.prune.seed);
    const std::uint64_t seed = seed_for(cfg, "prune/random/" + std::to_string(user_seed));
    plan = make_plan(pool, strategy, factor, strategy == Strategy::kRandom ? seed : 0,
                     needs_model(strategy) ? &base() : nullptr);
    fs::create_directories(cfg.out_dir);
    save_plan(plan, cfg.out_dir / "plan.json");
  }
  write_text(cfg.out_dir / "kept_ids.txt", kept_text(plan));

  const LabeledDataset pruned = apply_plan(pool, plan);
  const ProbeModel model = train(pruned, cfg.train);
  save_model(model, cfg.out_dir / "model_pruned.json");

  auto p = provenance(cfg, replay.empty() ? "prune" : "prune --replay");
  p["pool"] = pool.description();
  p["pool_hash"] = plan.pool_hash;
  p["strategy"] = to_string(plan.strategy);
  p["factor"] = plan.factor;
  p["plan_seed"] = plan.seed;
  if (!plan.model_hash.empty()) p["margin_model_hash"] = plan.model_hash;
  p["kept"] = plan.kept_ids.size();
  p["pruned_model_hash"] = model_fingerprint(model);
  p["outputs"] = replay.empty() ? std::vector<std::string>{"plan.json", "kept_ids.txt", "model_pruned.json"}
                                : std::vector<std::string>{"kept_ids.txt", "model_pruned.json"};
  out << to_string(plan.strategy) << " at factor " << plan.factor << ": kept " << plan.kept_ids.size() << " of "
      << pool.size() << '\n';
  if (!cfg.eval_sets.empty()) {
    const auto scores = evaluate(model, eval_sets_of(cfg));
    nlohmann::ordered_json eers;
    for (const auto& s : scores) eers[s.eval_set] = s.eer;
    p["eer"] = eers;
    print_eers(out, scores);
  }
  write_provenance(cfg, p, replay.empty() ? "prune_provenance.json" : "replay_provenance.json");
  return 0;
}

// ---------------------------------------------------------- augment / segment

int cmd_augment(const Common& c, const std::string& manifest_arg, const std::string& root_arg, bool append,
                std::ostream& out) {
  RunConfig cfg = config_from(c);
  if (cfg.augment.empty()) throw Error(ErrorCode::kConfig, "no [[augment]] entries configured");
  const fs::path manifest = manifest_arg.empty() ? cfg.augment_run.manifest : fs::path(manifest_arg);
  if (manifest.empty()) throw UsageError("augment needs --manifest or augment_run.manifest");
  fs::path root = root_arg.empty() ? cfg.augment_run.audio_root : fs::path(root_arg);
  if (root.empty()) root = manifest.parent_path();
  const auto records = read_manifest(manifest);

  AugmentTreeOptions o;
  o.audio_root = root;
  o.out_dir = cfg.out_dir;
  o.seed = seed_for(cfg, "augment");
  o.append = append || cfg.augment_run.append;
  o.workers = cfg.workers;
  const AugmentSummary summary = augment_tree(records, cfg.augment, o);

  auto p = provenance(cfg, "augment");
  p["augment_seed"] = o.seed;
  p["mode"] = o.append ? "append" : "replace";
  nlohmann::ordered_json ops = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < cfg.augment.size(); ++k) {
    ops.push_back({{"name", cfg.augment[k].name},
                   {"kind", to_string(cfg.augment[k].kind)},
                   {"samples", summary.per_op[k]}});
  }
  p["ops"] = ops;
  p["clipped_samples"] = summary.clipped_samples;
  p["outputs"] = {"manifest.jsonl", "audio/"};
  write_provenance(cfg, p, "augment_provenance.json");
  out << "augmented " << summary.processed << " files into " << cfg.out_dir.string() << '\n';
  for (std::size_t k = 0; k < cfg.augment.size(); ++k) {
    out << "  " << cfg.augment[k].name << ": " << summary.per_op[k] << '\n';
  }
  if (summary.clipped_samples) out << "  clipped samples: " << summary.clipped_samples << '\n';
  return 0;
}

std::string chunk_suffix(std::size_t k) {
  std::ostringstream s;
  s << "_c" << std::setw(3) << std::setfill('0') << k;
  return s.str();
}

int cmd_segment(const Common& c, const std::vector<std::string>& inputs, const std::string& manifest_arg,
                const std::string& root_arg, std::optional<double> chunk_arg, std::ostream& out) {
  RunConfig cfg = config_from(c, false);
  const double chunk_s = chunk_arg.value_or(cfg.segment.chunk_s);
  if (!(chunk_s > 0)) throw UsageError("--chunk must be positive");
  std::size_t files = 0, chunks = 0;

  for (const auto& in : inputs) {
    const auto parts = segment(read_wav(in), chunk_s);
    const std::string stem = fs::path(in).stem().string();
    fs::create_directories(cfg.out_dir);
    for (std::size_t k = 0; k < parts.size(); ++k) write_wav(parts[k], cfg.out_dir / (stem + chunk_suffix(k) + ".wav"));
    ++files;
    chunks += parts.size();
  }

  const fs::path manifest = manifest_arg.empty() ? cfg.segment.manifest : fs::path(manifest_arg);
  if (!manifest.empty()) {
    fs::path root = root_arg.empty() ? cfg.segment.audio_root : fs::path(root_arg);
    if (root.empty()) root = manifest.parent_path();
    std::vector<SampleRecord> outrecs;
    for (const auto& rec : read_manifest(manifest)) {
      const auto parts = segment(read_wav(root / rec.source_path), chunk_s);
      for (std::size_t k = 0; k < parts.size(); ++k) {
        fs::path rel = fs::path("audio") / fs::path(rec.source_path).relative_path();
        rel.replace_filename(rel.stem().string() + chunk_suffix(k) + ".wav");
        fs::create_directories((cfg.out_dir / rel).parent_path());
        write_wav(parts[k], cfg.out_dir / rel);
        SampleRecord r = rec;
        r.id = rec.id + chunk_suffix(k);
        r.source_path = rel.generic_string();
        r.duration_s = parts[k].duration_s();
        nlohmann::ordered_json extra = rec.extra_json.empty() ? nlohmann::ordered_json::object()
                                                              : nlohmann::ordered_json::parse(rec.extra_json);
        extra["segment_of"] = rec.id;
        extra["segment_index"] = k;
        r.extra_json = extra.dump();
        outrecs.push_back(std::move(r));
      }
      ++files;
      chunks += parts.size();
    }
    fs::create_directories(cfg.out_dir);
    write_manifest(outrecs, cfg.out_dir / "manifest.jsonl");
  }
  if (files == 0) throw UsageError("segment needs input files or a manifest");
  out << "segmented " << files << " files into " << chunks << " chunks of " << chunk_s << " s\n";
  return 0;
}

// ------------------------------------------------------------------ report

int cmd_report(const std::vector<std::string>& score_files, const std::string& sweep_file, std::size_t top,
               std::ostream& out) {
  if (score_files.empty() && sweep_file.empty()) throw UsageError("report needs --scores or --sweep");
  if (!score_files.empty()) {
    out << "| scores | n | EER (%) |\n|---|---|---|\n";
    std::vector<double> values;
    for (const auto& f : score_files) {
      const ScoreSet s = read_scores_csv(f);
      const double e = eer(s).eer;
      values.push_back(e);
      out << "| " << fs::path(f).filename().string() << " | " << s.scores.size() << " | " << pct(e) << " |\n";
    }
    if (values.size() > 1) out << "| mean | | " << pct(mean_eer(values)) << " |\n";
  }
  if (!sweep_file.empty()) {
    std::ifstream in(sweep_file);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + sweep_file);
    std::string line;
    std::getline(in, line);
    if (line != "combination,eval_set,eer") throw Error(ErrorCode::kFormat, sweep_file + ": not a sweep CSV");
    std::vector<std::pair<std::string, std::string>> means;
    while (std::getline(in, line)) {
      const auto a = line.find(','), b = line.rfind(',');
      if (a == std::string::npos || a == b) continue;
      if (line.substr(a + 1, b - a - 1) == "mean") means.emplace_back(line.substr(0, a), line.substr(b + 1));
    }
    if (!score_files.empty()) out << '\n';
    out << "| rank | combination | mean EER (%) |\n|---|---|---|\n";
    for (std::size_t i = 0; i < std::min(top, means.size()); ++i) {
      std::ostringstream v;
      v << std::fixed << std::setprecision(2) << std::stod(means[i].second);
      out << "| " << i + 1 << " | " << means[i].first << " | " << v.str() << " |\n";
    }
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dataset curation experiments for embedding-based spoof detection", "dfcurate"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;

  std::vector<std::string> validate_dirs;
  auto* v = app.add_subcommand("validate", "Check store directories and print per-split counts");
  add_common(v, common);
  v->add_option("stores", validate_dirs, "Store directories");

  std::vector<std::string> pool_arg;
  std::string model_path;
  auto* t = app.add_subcommand("train", "Train the probe on a pool of stores");
  add_common(t, common);
  t->add_option("--pool", pool_arg, "Store names (comma separated); default from config or all");
  t->add_option("--model", model_path, "Model output path");

  std::vector<std::string> eval_only;
  auto* e = app.add_subcommand("eval", "Score eval sets with a trained probe");
  add_common(e, common);
  e->add_option("--model", model_path, "Model file");
  e->add_option("--eval", eval_only, "Eval set names (comma separated); default all");

  auto* s = app.add_subcommand("sweep", "Train and evaluate every non-empty store combination");
  add_common(s, common);

  std::vector<std::string> strategies;
  std::vector<double> factors;
  auto* cu = app.add_subcommand("curve", "Pruning curves over strategies and factors");
  add_common(cu, common);
  cu->add_option("--strategies", strategies, "Strategies (comma separated)");
  cu->add_option("--factors", factors, "Pruning factors")->delimiter(',');

  std::optional<std::string> strategy;
  std::optional<double> factor;
  std::optional<std::uint64_t> prune_seed;
  std::string replay;
  auto* p = app.add_subcommand("prune", "Draw a pruning plan, retrain and evaluate");
  add_common(p, common);
  p->add_option("--strategy", strategy, "random, cluster_closest, cluster_furthest, margin_noisy, margin_both");
  p->add_option("--factor", factor, "Fraction of samples to discard")->check(CLI::Range(0.0, 1.0));
  p->add_option("--prune-seed", prune_seed, "Seed for random pruning (namespaced under the root seed)");
  p->add_option("--replay", replay, "Re-apply a stored plan instead of drawing one")->check(CLI::ExistingFile);

  std::string manifest, audio_root;
  bool append = false;
  auto* a = app.add_subcommand("augment", "Partition-and-assign waveform augmentation");
  add_common(a, common);
  a->add_option("--manifest", manifest, "Input manifest.jsonl");
  a->add_option("--audio-root", audio_root, "Directory source_path entries are relative to");
  a->add_flag("--append", append, "Keep originals next to augmented copies");

  std::vector<std::string> seg_inputs;
  std::optional<double> chunk;
  auto* sg = app.add_subcommand("segment", "Cut audio into fixed-length chunks, dropping the tail");
  add_common(sg, common);
  sg->add_option("inputs", seg_inputs, "WAV files");
  sg->add_option("--manifest", manifest, "Manifest whose files are segmented");
  sg->add_option("--audio-root", audio_root, "Directory source_path entries are relative to");
  sg->add_option("--chunk", chunk, "Chunk length in seconds (default 10)");

  std::vector<std::string> score_files;
  std::string sweep_file;
  std::size_t top = 10;
  auto* r = app.add_subcommand("report", "Summarize score files or a sweep CSV as Markdown");
  r->add_option("--scores", score_files, "Score CSV files")->check(CLI::ExistingFile);
  r->add_option("--sweep", sweep_file, "sweep.csv")->check(CLI::ExistingFile);
  r->add_option("--top", top, "Rows to show from the sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (v->parsed()) return cmd_validate(common, validate_dirs, out, err);
    if (t->parsed()) return cmd_train(common, pool_arg, model_path, out);
    if (e->parsed()) return cmd_eval(common, model_path, eval_only, out);
    if (s->parsed()) return cmd_sweep(common, out);
    if (cu->parsed()) return cmd_curve(common, strategies, factors, out);
    if (p->parsed()) return cmd_prune(common, strategy, factor, prune_seed, replay, out, err);
    if (a->parsed()) return cmd_augment(common, manifest, audio_root, append, out);
    if (sg->parsed()) return cmd_segment(common, seg_inputs, manifest, audio_root, chunk, out);
    if (r->parsed()) return cmd_report(score_files, sweep_file, top, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return 2;
  } catch (const Error& ex) {
    err << "error [" << to_string(ex.code()) << "]: " << ex.what() << '\n';
    return 1;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace dfcurate
