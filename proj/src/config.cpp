#include "dfcurate/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dfcurate/error.hpp"
#include "dfcurate/util.hpp"

namespace dfcurate {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::kConfig, msg); }

class Cursor {
 public:
  Cursor(std::string_view text, std::string_view source) : text_(text), source_(source) {}

  bool done() const { return pos_ >= text_.size(); }
  char peek() const { return done() ? '\0' : text_[pos_]; }
  char get() {
    const char c = peek();
    if (c == '\n') ++line_;
    ++pos_;
    return c;
  }
  bool starts_with(std::string_view s) const { return text_.substr(pos_).starts_with(s); }

  void skip_blank() {
    while (peek() == ' ' || peek() == '\t') get();
  }
  // Whitespace, newlines and comments; used inside arrays.
  void skip_space_and_comments() {
    for (;;) {
      skip_blank();
      if (peek() == '#') {
        while (!done() && peek() != '\n') get();
      } else if (peek() == '\n' || peek() == '\r') {
        get();
      } else {
        return;
      }
    }
  }
  // Rest of line must be empty or a comment.
  void end_of_line() {
    skip_blank();
    if (peek() == '#') {
      while (!done() && peek() != '\n') get();
    }
    if (peek() == '\r') get();
    if (!done() && peek() != '\n') fail("unexpected text after value");
    if (!done()) get();
  }

  [[noreturn]] void fail(const std::string& msg) const {
    config_error(std::string(source_) + ":" + std::to_string(line_) + ": " + msg);
  }

 private:
  std::string_view text_;
  std::string_view source_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

bool is_bare_key_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

std::string parse_basic_string(Cursor& c) {
  c.get();  // opening quote
  std::string out;
  for (;;) {
    if (c.done() || c.peek() == '\n') c.fail("unterminated string");
    const char ch = c.get();
    if (ch == '"') return out;
    if (ch != '\\') {
      out += ch;
      continue;
    }
    const char esc = c.get();
    switch (esc) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      default: c.fail(std::string("unsupported escape \\") + esc);
    }
  }
}

std::string parse_literal_string(Cursor& c) {
  c.get();
  std::string out;
  for (;;) {
    if (c.done() || c.peek() == '\n') c.fail("unterminated string");
    const char ch = c.get();
    if (ch == '\'') return out;
    out += ch;
  }
}

std::string parse_key_part(Cursor& c) {
  c.skip_blank();
  if (c.peek() == '"') return parse_basic_string(c);
  if (c.peek() == '\'') return parse_literal_string(c);
  std::string out;
  while (is_bare_key_char(c.peek())) out += c.get();
  if (out.empty()) c.fail("expected a key");
  return out;
}

std::string parse_dotted_key(Cursor& c) {
  std::string key = parse_key_part(c);
  for (;;) {
    c.skip_blank();
    if (c.peek() != '.') return key;
    c.get();
    key += '.' + parse_key_part(c);
  }
}

TomlValue parse_value(Cursor& c);

TomlValue parse_number_or_bool(Cursor& c) {
  std::string tok;
  while (!c.done()) {
    const char ch = c.peek();
    if (ch == ',' || ch == ']' || ch == '#' || ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') break;
    tok += c.get();
  }
  if (tok == "true") return {true};
  if (tok == "false") return {false};
  if (tok.empty()) c.fail("expected a value");
  std::string digits;
  for (char ch : tok) {
    if (ch != '_') digits += ch;
  }
  if (digits == "inf" || digits == "+inf" || digits == "-inf" || digits == "nan") c.fail("non-finite numbers are not allowed");
  const bool is_float = digits.find_first_of(".eE") != std::string::npos;
  const char* first = digits.data() + (digits[0] == '+' ? 1 : 0);
  const char* last = digits.data() + digits.size();
  if (is_float) {
    double d = 0;
    const auto [p, ec] = std::from_chars(first, last, d);
    if (ec != std::errc() || p != last) c.fail("malformed number '" + tok + "'");
    return {d};
  }
  std::int64_t i = 0;
  const auto [p, ec] = std::from_chars(first, last, i);
  if (ec != std::errc() || p != last) c.fail("malformed value '" + tok + "'");
  return {i};
}

TomlValue parse_array(Cursor& c) {
  c.get();
  TomlArray arr;
  for (;;) {
    c.skip_space_and_comments();
    if (c.peek() == ']') {
      c.get();
      return {arr};
    }
    arr.push_back(parse_value(c));
    c.skip_space_and_comments();
    if (c.peek() == ',') {
      c.get();
    } else if (c.peek() != ']') {
      c.fail("expected ',' or ']' in array");
    }
  }
}

TomlValue parse_value(Cursor& c) {
  c.skip_blank();
  switch (c.peek()) {
    case '"':
      if (c.starts_with("\"\"\"")) c.fail("multi-line strings are not supported");
      return {parse_basic_string(c)};
    case '\'': return {parse_literal_string(c)};
    case '[': return parse_array(c);
    case '{': c.fail("inline tables are not supported");
    default: return parse_number_or_bool(c);
  }
}

std::string value_text(const TomlValue& v) {
  std::ostringstream s;
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          s << (x ? "true" : "false");
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          s << x;
        } else if constexpr (std::is_same_v<T, double>) {
          s.precision(17);
          s << x;
        } else if constexpr (std::is_same_v<T, std::string>) {
          s << '"';
          for (char ch : x) {
            if (ch == '"' || ch == '\\') s << '\\';
            s << ch;
          }
          s << '"';
        } else {
          s << '[';
          for (std::size_t i = 0; i < x.size(); ++i) s << (i ? ", " : "") << value_text(x[i]);
          s << ']';
        }
      },
      v.v);
  return s.str();
}

}  // namespace

std::string TomlValue::type_name() const {
  static constexpr const char* names[] = {"boolean", "integer", "float", "string", "array"};
  return names[v.index()];
}

const TomlValue* TomlTable::find(std::string_view key) const {
  const auto it = values_.find(std::string(key));
  return it == values_.end() ? nullptr : &it->second;
}

void TomlTable::set(const std::string& key, TomlValue value) {
  if (!values_.contains(key)) order_.push_back(key);
  values_[key] = std::move(value);
}

TomlTable TomlTable::table(std::string_view prefix) const {
  TomlTable out;
  const std::string p = std::string(prefix) + ".";
  for (const auto& k : order_) {
    if (k.starts_with(p)) out.set(k.substr(p.size()), values_.at(k));
  }
  return out;
}

std::vector<std::string> TomlTable::child_keys(std::string_view prefix) const {
  std::vector<std::string> out;
  const std::string p = prefix.empty() ? "" : std::string(prefix) + ".";
  for (const auto& k : order_) {
    if (!k.starts_with(p)) continue;
    std::string rest = k.substr(p.size());
    rest = rest.substr(0, rest.find('.'));
    if (std::find(out.begin(), out.end(), rest) == out.end()) out.push_back(rest);
  }
  return out;
}

const std::vector<TomlTable>& TomlTable::array_tables(std::string_view name) const {
  static const std::vector<TomlTable> empty;
  const auto it = arrays_.find(std::string(name));
  return it == arrays_.end() ? empty : it->second;
}

std::vector<TomlTable>& TomlTable::add_array_table(const std::string& name) { return arrays_[name]; }

namespace {

template <class T>
const T* typed(const TomlTable& t, std::string_view key, const char* want) {
  const TomlValue* v = t.find(key);
  if (!v) return nullptr;
  const T* p = std::get_if<T>(&v->v);
  if (!p) config_error("key '" + std::string(key) + "' must be " + want + ", got " + v->type_name());
  return p;
}

}  // namespace

std::optional<std::string> TomlTable::get_string(std::string_view key) const {
  const auto* p = typed<std::string>(*this, key, "a string");
  return p ? std::optional(*p) : std::nullopt;
}

std::optional<double> TomlTable::get_double(std::string_view key) const {
  const TomlValue* v = find(key);
  if (!v) return std::nullopt;
  if (const auto* i = std::get_if<std::int64_t>(&v->v)) return static_cast<double>(*i);
  return *typed<double>(*this, key, "a number");
}

std::optional<std::int64_t> TomlTable::get_int(std::string_view key) const {
  const auto* p = typed<std::int64_t>(*this, key, "an integer");
  return p ? std::optional(*p) : std::nullopt;
}

std::optional<bool> TomlTable::get_bool(std::string_view key) const {
  const auto* p = typed<bool>(*this, key, "a boolean");
  return p ? std::optional(*p) : std::nullopt;
}

std::optional<std::vector<std::string>> TomlTable::get_strings(std::string_view key) const {
  const auto* arr = typed<TomlArray>(*this, key, "an array");
  if (!arr) return std::nullopt;
  std::vector<std::string> out;
  for (const auto& v : *arr) {
    const auto* s = std::get_if<std::string>(&v.v);
    if (!s) config_error("key '" + std::string(key) + "' must hold strings");
    out.push_back(*s);
  }
  return out;
}

std::optional<std::vector<double>> TomlTable::get_doubles(std::string_view key) const {
  const auto* arr = typed<TomlArray>(*this, key, "an array");
  if (!arr) return std::nullopt;
  std::vector<double> out;
  for (const auto& v : *arr) {
    if (const auto* i = std::get_if<std::int64_t>(&v.v)) {
      out.push_back(static_cast<double>(*i));
    } else if (const auto* d = std::get_if<double>(&v.v)) {
      out.push_back(*d);
    } else {
      config_error("key '" + std::string(key) + "' must hold numbers");
    }
  }
  return out;
}

std::optional<std::vector<std::int64_t>> TomlTable::get_ints(std::string_view key) const {
  const auto* arr = typed<TomlArray>(*this, key, "an array");
  if (!arr) return std::nullopt;
  std::vector<std::int64_t> out;
  for (const auto& v : *arr) {
    const auto* i = std::get_if<std::int64_t>(&v.v);
    if (!i) config_error("key '" + std::string(key) + "' must hold integers");
    out.push_back(*i);
  }
  return out;
}

std::string TomlTable::canonical() const {
  std::ostringstream s;
  for (const auto& [k, v] : values_) s << k << " = " << value_text(v) << '\n';
  for (const auto& [name, tables] : arrays_) {
    for (const auto& t : tables) s << "[[" << name << "]]\n" << t.canonical();
  }
  return s.str();
}

TomlTable parse_toml(std::string_view text, std::string_view source) {
  TomlTable root;
  Cursor c(text, source);
  TomlTable* target = &root;
  std::string prefix;
  std::set<std::string> seen_tables;
  while (true) {
    c.skip_space_and_comments();
    if (c.done()) break;
    if (c.peek() == '[') {
      c.get();
      const bool array = c.peek() == '[';
      if (array) c.get();
      const std::string name = parse_dotted_key(c);
      c.skip_blank();
      if (c.get() != ']' || (array && c.get() != ']')) c.fail("malformed table header");
      c.end_of_line();
      if (array) {
        auto& list = root.add_array_table(name);
        list.emplace_back();
        target = &list.back();
        prefix.clear();
      } else {
        const auto dot = name.find('.');
        const std::string head = name.substr(0, dot);
        if (dot != std::string::npos && !root.array_tables(head).empty()) {
          // [aot.sub] after [[aot]] belongs to the last element.
          target = &root.add_array_table(head).back();
          prefix = name.substr(dot + 1) + ".";
        } else {
          if (!seen_tables.insert(name).second) c.fail("table [" + name + "] defined twice");
          target = &root;
          prefix = name + ".";
        }
      }
      continue;
    }
    const std::string key = prefix + parse_dotted_key(c);
    c.skip_blank();
    if (c.get() != '=') c.fail("expected '=' after key '" + key + "'");
    TomlValue value = parse_value(c);
    c.end_of_line();
    if (target->contains(key)) c.fail("duplicate key '" + key + "'");
    target->set(key, std::move(value));
  }
  return root;
}

TomlValue parse_toml_value(std::string_view text) {
  std::string buf(text);
  buf += '\n';
  Cursor c(buf, "<override>");
  TomlValue v = parse_value(c);
  c.end_of_line();
  if (!c.done()) c.fail("trailing text");
  return v;
}

void apply_override(TomlTable& table, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) config_error("override must look like key=value: " + std::string(assignment));
  std::string key(assignment.substr(0, eq));
  key.erase(key.find_last_not_of(" \t") + 1);
  std::string_view raw = assignment.substr(eq + 1);
  while (!raw.empty() && (raw.front() == ' ' || raw.front() == '\t')) raw.remove_prefix(1);
  TomlValue value;
  try {
    value = parse_toml_value(raw);
  } catch (const Error&) {
    value = TomlValue{std::string(raw)};
  }
  table.set(key, std::move(value));
}

namespace {

void check_keys(const TomlTable& t, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& k : t.keys()) {
    const std::string head = k.substr(0, k.find('.'));
    if (!allowed.contains(head) && !allowed.contains(k)) config_error("unknown key '" + k + "' in " + where);
  }
}

Range get_range(const TomlTable& t, const std::string& key, Range fallback) {
  const auto v = t.get_doubles(key);
  if (!v) return fallback;
  if (v->size() != 2) config_error("'" + key + "' must be [low, high]");
  return {(*v)[0], (*v)[1]};
}

IntRange get_int_range(const TomlTable& t, const std::string& key, IntRange fallback) {
  const auto v = t.get_ints(key);
  if (!v) return fallback;
  if (v->size() != 2) config_error("'" + key + "' must be [low, high]");
  return {static_cast<int>((*v)[0]), static_cast<int>((*v)[1])};
}

BandParams get_bands(const TomlTable& t, const std::string& prefix, BandParams b) {
  b.n_bands = get_int_range(t, prefix + "n_bands", b.n_bands);
  b.center_hz = get_range(t, prefix + "center_hz", b.center_hz);
  b.bandwidth_hz = get_range(t, prefix + "bandwidth_hz", b.bandwidth_hz);
  b.gain_db = get_range(t, prefix + "gain_db", b.gain_db);
  if (auto v = t.get_int(prefix + "fir_length")) b.fir_length = static_cast<int>(*v);
  return b;
}

AugmentSpec build_augment(const TomlTable& t, std::size_t index) {
  const std::string where = "[[augment]] #" + std::to_string(index + 1);
  AugmentSpec spec;
  const auto kind = t.get_string("kind");
  if (!kind) config_error(where + " needs 'kind'");
  spec.kind = parse_augment_kind(*kind);
  spec.name = t.get_string("name").value_or(std::string(to_string(spec.kind)));
  const std::set<std::string> band_keys = {"n_bands", "center_hz", "bandwidth_hz", "gain_db", "fir_length"};
  std::set<std::string> allowed = {"name", "kind"};
  switch (spec.kind) {
    case AugmentKind::kLnlConvolutive:
      allowed.insert(band_keys.begin(), band_keys.end());
      allowed.insert({"orders", "nonlinear_attenuation_db"});
      spec.lnl.bands = get_bands(t, "", spec.lnl.bands);
      if (auto v = t.get_ints("orders")) spec.lnl.orders.assign(v->begin(), v->end());
      spec.lnl.nonlinear_attenuation_db = get_range(t, "nonlinear_attenuation_db", spec.lnl.nonlinear_attenuation_db);
      break;
    case AugmentKind::kImpulsive:
      allowed.insert({"fraction", "amplitude"});
      spec.impulsive.fraction = get_range(t, "fraction", spec.impulsive.fraction);
      spec.impulsive.amplitude = get_range(t, "amplitude", spec.impulsive.amplitude);
      validate(spec.impulsive);
      break;
    case AugmentKind::kStationaryAdditive:
      allowed.insert(band_keys.begin(), band_keys.end());
      allowed.insert("snr_db");
      spec.stationary.snr_db = get_range(t, "snr_db", spec.stationary.snr_db);
      spec.stationary.coloring = get_bands(t, "", spec.stationary.coloring);
      break;
    case AugmentKind::kCodec: {
      allowed.insert({"codec", "encode", "decode", "container_ext"});
      const std::string codec = t.get_string("codec").value_or("custom");
      if (codec == "opus") {
        spec.codec = opus_codec();
      } else if (codec == "aac") {
        spec.codec = aac_codec();
      } else if (codec == "custom") {
        spec.codec.name = "custom";
      } else {
        config_error(where + ": codec must be opus, aac or custom");
      }
      if (auto v = t.get_string("encode")) spec.codec.encode_template = *v;
      if (auto v = t.get_string("decode")) spec.codec.decode_template = *v;
      if (auto v = t.get_string("container_ext")) spec.codec.container_ext = *v;
      validate(spec.codec);
      break;
    }
  }
  check_keys(t, allowed, where);
  return spec;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::vector<std::pair<std::string, fs::path>> path_table(const TomlTable& root, const std::string& name,
                                                         const fs::path& base) {
  std::vector<std::pair<std::string, fs::path>> out;
  const TomlTable t = root.table(name);
  for (const auto& k : t.keys()) {
    if (k.find('.') != std::string::npos) config_error("[" + name + "] entries must be name = \"path\"");
    const auto v = t.get_string(k);
    out.emplace_back(k, resolve(base, *v));
  }
  return out;
}

std::uint64_t non_negative(std::int64_t v, const std::string& key) {
  if (v < 0) config_error("'" + key + "' must be non-negative");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

RunConfig build_config(const TomlTable& table, const fs::path& base_dir) {
  check_keys(table,
             {"seed", "workers", "out_dir", "pool", "stores", "eval", "train", "prune", "curve", "augment_run",
              "segment"},
             "config");
  RunConfig cfg;
  cfg.stores = path_table(table, "stores", base_dir);
  cfg.eval_sets = path_table(table, "eval", base_dir);
  if (auto v = table.get_int("seed")) cfg.seed = non_negative(*v, "seed");
  if (auto v = table.get_int("workers")) {
    if (*v < 1) config_error("'workers' must be at least 1");
    cfg.workers = static_cast<std::size_t>(*v);
  }
  if (auto v = table.get_string("out_dir")) cfg.out_dir = resolve(base_dir, *v);
  if (auto v = table.get_strings("pool")) cfg.pool = *v;
  for (const auto& name : cfg.pool) {
    const bool known = std::any_of(cfg.stores.begin(), cfg.stores.end(), [&](const auto& s) { return s.first == name; });
    if (!known) config_error("pool names unknown store '" + name + "'");
  }

  const TomlTable train = table.table("train");
  check_keys(train, {"C", "tol", "max_iter", "penalize_bias", "standardize", "splits"}, "[train]");
  if (auto v = train.get_double("C")) cfg.train.C = *v;
  if (auto v = train.get_double("tol")) cfg.train.tol = *v;
  if (auto v = train.get_int("max_iter")) cfg.train.max_iter = static_cast<int>(*v);
  if (auto v = train.get_bool("penalize_bias")) cfg.train.penalize_bias = *v;
  if (auto v = train.get_bool("standardize")) cfg.train.standardize = *v;
  if (auto v = train.get_strings("splits")) {
    std::set<Split> splits;
    for (const auto& s : *v) {
      try {
        splits.insert(parse_split(s));
      } catch (const Error& e) {
        config_error(std::string("[train] splits: ") + e.what());
      }
    }
    cfg.split_filter = splits;
  }
  try {
    validate_options(cfg.train);
  } catch (const Error& e) {
    config_error(std::string("[train]: ") + e.what());
  }

  const TomlTable prune = table.table("prune");
  check_keys(prune, {"strategy", "factor", "seed"}, "[prune]");
  if (auto v = prune.get_string("strategy")) cfg.prune.strategy = parse_strategy(*v);
  if (auto v = prune.get_double("factor")) cfg.prune.factor = *v;
  if (auto v = prune.get_int("seed")) cfg.prune.seed = non_negative(*v, "prune.seed");
  if (!(cfg.prune.factor >= 0.0 && cfg.prune.factor < 1.0)) config_error("prune.factor must lie in [0, 1)");

  const TomlTable curve = table.table("curve");
  check_keys(curve, {"strategies", "factors", "seeds"}, "[curve]");
  if (auto v = curve.get_strings("strategies")) {
    cfg.curve.strategies.clear();
    for (const auto& s : *v) cfg.curve.strategies.push_back(parse_strategy(s));
  }
  if (auto v = curve.get_doubles("factors")) cfg.curve.factors = *v;
  for (double f : cfg.curve.factors) {
    if (!(f >= 0.0 && f < 1.0)) config_error("curve.factors must lie in [0, 1)");
  }
  if (auto v = curve.get_ints("seeds")) {
    cfg.curve.seeds.clear();
    for (auto s : *v) cfg.curve.seeds.push_back(non_negative(s, "curve.seeds"));
    if (cfg.curve.seeds.empty()) config_error("curve.seeds must not be empty");
  }

  const auto& ops = table.array_tables("augment");
  for (std::size_t i = 0; i < ops.size(); ++i) cfg.augment.push_back(build_augment(ops[i], i));

  const TomlTable aug = table.table("augment_run");
  check_keys(aug, {"manifest", "audio_root", "append"}, "[augment_run]");
  if (auto v = aug.get_string("manifest")) cfg.augment_run.manifest = resolve(base_dir, *v);
  if (auto v = aug.get_string("audio_root")) cfg.augment_run.audio_root = resolve(base_dir, *v);
  if (auto v = aug.get_bool("append")) cfg.augment_run.append = *v;

  const TomlTable seg = table.table("segment");
  check_keys(seg, {"manifest", "audio_root", "chunk_s"}, "[segment]");
  if (auto v = seg.get_string("manifest")) cfg.segment.manifest = resolve(base_dir, *v);
  if (auto v = seg.get_string("audio_root")) cfg.segment.audio_root = resolve(base_dir, *v);
  if (auto v = seg.get_double("chunk_s")) cfg.segment.chunk_s = *v;
  if (!(cfg.segment.chunk_s > 0)) config_error("segment.chunk_s must be positive");

  // workers and out_dir change neither results nor their meaning
  std::istringstream lines(table.canonical());
  std::string hashed, line;
  while (std::getline(lines, line)) {
    if (line.rfind("workers = ", 0) == 0 || line.rfind("out_dir = ", 0) == 0) continue;
    hashed += line + '\n';
  }
  cfg.config_hash = hex64(fnv1a64(hashed));
  return cfg;
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  TomlTable table = parse_toml(s.str(), path.string());
  for (const auto& o : overrides) apply_override(table, o);
  return build_config(table, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

}  // namespace dfcurate
