#pragma once

// Experiment configuration: a TOML subset plus the typed run config built
// from it.
//
// Supported syntax: comments, [table] and [[array.of.tables]] headers,
// bare or quoted keys (dotted keys allowed), basic "strings" and literal
// 'strings', integers, floats, booleans and arrays of those (multi-line
// arrays allowed). Inline tables and dates are not supported.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dfcurate/augment.hpp"
#include "dfcurate/embedding_store.hpp"
#include "dfcurate/probe.hpp"
#include "dfcurate/pruning.hpp"

namespace dfcurate {

struct TomlValue;
using TomlArray = std::vector<TomlValue>;

struct TomlValue {
  std::variant<bool, std::int64_t, double, std::string, TomlArray> v;

  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_array() const { return std::holds_alternative<TomlArray>(v); }
  std::string type_name() const;
  bool operator==(const TomlValue&) const = default;
};

class TomlTable {
 public:
  // Keys in file order; each key is relative to this table.
  const std::vector<std::string>& keys() const noexcept { return order_; }
  bool contains(std::string_view key) const { return values_.contains(std::string(key)); }
  const TomlValue* find(std::string_view key) const;
  void set(const std::string& key, TomlValue value);  // replaces, keeps position

  // Sub-table view: keys "prefix.x" become "x".
  TomlTable table(std::string_view prefix) const;
  // Names of the direct children of prefix, e.g. table keys under [stores].
  std::vector<std::string> child_keys(std::string_view prefix) const;

  const std::vector<TomlTable>& array_tables(std::string_view name) const;
  std::vector<TomlTable>& add_array_table(const std::string& name);

  // Typed getters; throw kConfig on type mismatch.
  std::optional<std::string> get_string(std::string_view key) const;
  std::optional<double> get_double(std::string_view key) const;
  std::optional<std::int64_t> get_int(std::string_view key) const;
  std::optional<bool> get_bool(std::string_view key) const;
  std::optional<std::vector<std::string>> get_strings(std::string_view key) const;
  std::optional<std::vector<double>> get_doubles(std::string_view key) const;
  std::optional<std::vector<std::int64_t>> get_ints(std::string_view key) const;

  // Canonical text: every key sorted, one per line. Used for hashing.
  std::string canonical() const;

 private:
  std::map<std::string, TomlValue> values_;
  std::vector<std::string> order_;
  std::map<std::string, std::vector<TomlTable>> arrays_;
};

TomlTable parse_toml(std::string_view text, std::string_view source = "<config>");
TomlValue parse_toml_value(std::string_view text);

// "key=value" with the value in TOML syntax; a bare word is taken as a string.
void apply_override(TomlTable& table, std::string_view assignment);

struct PruneSettings {
  Strategy strategy = Strategy::kMarginBoth;
  double factor = 0.8;
  std::uint64_t seed = 0;
};

struct CurveSettings {
  std::vector<Strategy> strategies{Strategy::kRandom, Strategy::kClusterClosest, Strategy::kClusterFurthest,
                                   Strategy::kMarginNoisy, Strategy::kMarginBoth};
  std::vector<double> factors;  // empty means the default grid
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

struct AugmentRunSettings {
  std::filesystem::path manifest;
  std::filesystem::path audio_root;
  bool append = false;
};

struct SegmentSettings {
  std::filesystem::path manifest;
  std::filesystem::path audio_root;
  double chunk_s = 10.0;
};

struct RunConfig {
  std::vector<std::pair<std::string, std::filesystem::path>> stores;  // file order
  std::vector<std::pair<std::string, std::filesystem::path>> eval_sets;
  std::vector<std::string> pool;  // training pool for train / prune / curve; empty = all stores
  TrainOptions train;
  std::optional<std::set<Split>> split_filter;
  PruneSettings prune;
  CurveSettings curve;
  std::vector<AugmentSpec> augment;
  AugmentRunSettings augment_run;
  SegmentSettings segment;
  std::filesystem::path out_dir = "out";
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  std::string config_hash;  // over the canonical text after overrides
};

// Relative paths resolve against base_dir. Unknown top-level keys or
// tables are rejected.
RunConfig build_config(const TomlTable& table, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace dfcurate
