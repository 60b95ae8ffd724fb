#pragma once

#include "uncaps/baselines.hpp"
#include "uncaps/core.hpp"
#include "uncaps/env.hpp"
#include "uncaps/policy.hpp"
#include "uncaps/search.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef UNCAPS_VERSION
#define UNCAPS_VERSION "0.1.0"
#endif

namespace uncaps {

inline constexpr const char* kVersion = UNCAPS_VERSION;

/// Bad configuration input. `line` is the 1-based source line, 0 when the
/// value came from the environment, a manifest or validation.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, std::string field, const std::string& message)
      : std::runtime_error(describe(line, field, message)), line_(line), field_(std::move(field)) {}

  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  static std::string describe(int line, const std::string& field, const std::string& message) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!field.empty()) out += "field '" + field + "': ";
    return out + message;
  }

  int line_;
  std::string field_;
};

// --- Number formatting --------------------------------------------------------

/// Shortest representation that parses back to the same double.
inline std::string format_full(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Six significant digits, for human-facing summaries.
inline std::string format_short(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw std::invalid_argument("expected a number, got '" + t + "'");
  }
  return v;
}

template <class Int>
Int parse_integer(const std::string& s) {
  const std::string t = trim(s);
  Int v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw std::invalid_argument("expected an integer, got '" + t + "'");
  }
  return v;
}

inline std::vector<std::string> parse_list(const std::string& s) {
  if (trim(s).empty()) return {};
  std::vector<std::string> out = split(s, ',');
  for (const std::string& item : out) {
    if (item.empty()) throw std::invalid_argument("empty item in list '" + s + "'");
  }
  return out;
}

inline Vector parse_vector(const std::string& s) {
  const std::vector<std::string> items = parse_list(s);
  Vector v(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_double(items[i]);
  return v;
}

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

inline std::string format_vector(const Vector& v) {
  std::vector<std::string> items;
  for (Eigen::Index i = 0; i < v.size(); ++i) items.push_back(format_full(v[i]));
  return join(items);
}

}  // namespace detail

// --- Configuration -------------------------------------------------------------

/// Everything needed to run a multi-seed comparison.
struct ExperimentConfig {
  MassSpringDamperOptions plant;
  double noise_std = 0.05;
  /// variant and seed are set per cell.
  SearchConfig search;
  std::vector<std::string> variants{"StandardBO", "UncAPS-EP", "UncAPS+GA", "UncAPS", "DR"};
  std::vector<std::uint64_t> seeds{50, 100, 150, 500, 1000};
  /// seed is set per trial.
  DRConfig dr;
  int jumpstart_episodes = 100;
  int jumpstart_horizon = 100;
  Vector init_half_width = Vector::Ones(2);
  std::string output_dir = "results";

  void validate() const;
};

/// Name of the domain-randomisation baseline in variant lists.
inline constexpr const char* kDRVariant = "DR";

namespace detail {

struct ConfigField {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline ConfigField double_field(std::string key, double ExperimentConfig::*member) {
  return {std::move(key), [member](const ExperimentConfig& c) { return format_full(c.*member); },
          [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_double(v); }};
}

template <class Get>
ConfigField ref_double_field(std::string key, Get ref) {
  return {std::move(key), [ref](const ExperimentConfig& c) { return format_full(ref(const_cast<ExperimentConfig&>(c))); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_double(v); }};
}

template <class Get>
ConfigField ref_int_field(std::string key, Get ref) {
  return {std::move(key), [ref](const ExperimentConfig& c) { return std::to_string(ref(const_cast<ExperimentConfig&>(c))); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_integer<int>(v); }};
}

template <class Get>
ConfigField ref_vector_field(std::string key, Get ref) {
  return {std::move(key), [ref](const ExperimentConfig& c) { return format_vector(ref(const_cast<ExperimentConfig&>(c))); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_vector(v); }};
}

inline ConfigField range_field(std::size_t slot) {
  std::string key = "plant." + msd_parameter_names()[slot] + "_range";
  return {std::move(key),
          [slot](const ExperimentConfig& c) {
            const ParamRange& r = c.plant.ranges[slot];
            return format_full(r.lower) + "," + format_full(r.upper);
          },
          [slot](ExperimentConfig& c, const std::string& v) {
            const Vector r = parse_vector(v);
            if (r.size() != 2) throw std::invalid_argument("expected 'lower,upper', got '" + v + "'");
            c.plant.ranges[slot] = ParamRange{r[0], r[1]};
          }};
}

inline std::vector<ConfigField> make_config_fields() {
  std::vector<ConfigField> f;
  f.push_back({"plant.latent", [](const ExperimentConfig& c) { return join(c.plant.latent); },
               [](ExperimentConfig& c, const std::string& v) { c.plant.latent = parse_list(v); }});
  for (std::size_t slot = 0; slot < 5; ++slot) {
    f.push_back(ref_double_field("plant." + msd_parameter_names()[slot],
                                 [slot](ExperimentConfig& c) -> double& { return c.plant.nominal[slot]; }));
  }
  for (std::size_t slot = 0; slot < 5; ++slot) f.push_back(range_field(slot));
  f.push_back(ref_double_field("plant.dt", [](ExperimentConfig& c) -> double& { return c.plant.dt; }));
  f.push_back(ref_double_field("plant.q_position", [](ExperimentConfig& c) -> double& { return c.plant.reward_q[0]; }));
  f.push_back(ref_double_field("plant.q_velocity", [](ExperimentConfig& c) -> double& { return c.plant.reward_q[1]; }));
  f.push_back(ref_double_field("plant.r", [](ExperimentConfig& c) -> double& { return c.plant.reward_r; }));
  f.push_back(double_field("world.noise_std", &ExperimentConfig::noise_std));

  f.push_back(ref_int_field("search.iterations", [](ExperimentConfig& c) -> int& { return c.search.iterations; }));
  f.push_back(ref_int_field("search.n_init", [](ExperimentConfig& c) -> int& { return c.search.n_init; }));
  f.push_back(ref_double_field("search.noise_variance",
                               [](ExperimentConfig& c) -> double& { return c.search.noise_variance; }));
  f.push_back(ref_double_field("search.ut_k", [](ExperimentConfig& c) -> double& { return c.search.ut_k; }));
  f.push_back(ref_int_field("search.samples", [](ExperimentConfig& c) -> int& { return c.search.n_samples; }));
  f.push_back(ref_int_field("search.features", [](ExperimentConfig& c) -> int& { return c.search.n_features; }));
  f.push_back({"search.hyper_mode",
               [](const ExperimentConfig& c) {
                 return std::string(c.search.hyper_mode == HyperparamMode::Evidence ? "evidence" : "fixed");
               },
               [](ExperimentConfig& c, const std::string& v) {
                 const std::string t = trim(v);
                 if (t == "fixed") {
                   c.search.hyper_mode = HyperparamMode::Fixed;
                 } else if (t == "evidence") {
                   c.search.hyper_mode = HyperparamMode::Evidence;
                 } else {
                   throw std::invalid_argument("expected 'fixed' or 'evidence', got '" + t + "'");
                 }
               }});
  f.push_back(ref_int_field("search.hyper_restarts", [](ExperimentConfig& c) -> int& { return c.search.hyper_restarts; }));
  f.push_back(ref_double_field("search.lengthscale", [](ExperimentConfig& c) -> double& { return c.search.gp.lengthscale; }));
  f.push_back(ref_double_field("search.signal_variance",
                               [](ExperimentConfig& c) -> double& { return c.search.gp.signal_variance; }));
  f.push_back(ref_double_field("search.gp_noise_variance",
                               [](ExperimentConfig& c) -> double& { return c.search.gp.noise_variance; }));
  f.push_back(ref_double_field("search.lengthscale_min",
                               [](ExperimentConfig& c) -> double& { return c.search.hyper_bounds.lengthscale_min; }));
  f.push_back(ref_double_field("search.lengthscale_max",
                               [](ExperimentConfig& c) -> double& { return c.search.hyper_bounds.lengthscale_max; }));
  f.push_back(ref_double_field("search.signal_min",
                               [](ExperimentConfig& c) -> double& { return c.search.hyper_bounds.signal_min; }));
  f.push_back(ref_double_field("search.signal_max",
                               [](ExperimentConfig& c) -> double& { return c.search.hyper_bounds.signal_max; }));
  f.push_back(ref_double_field("search.noise_min",
                               [](ExperimentConfig& c) -> double& { return c.search.hyper_bounds.noise_min; }));
  f.push_back(ref_double_field("search.noise_max",
                               [](ExperimentConfig& c) -> double& { return c.search.hyper_bounds.noise_max; }));
  f.push_back(ref_int_field("search.acq_restarts", [](ExperimentConfig& c) -> int& { return c.search.acq_restarts; }));
  f.push_back(ref_int_field("search.acq_pool", [](ExperimentConfig& c) -> int& { return c.search.acq_pool; }));
  f.push_back(ref_int_field("search.latent_restarts", [](ExperimentConfig& c) -> int& { return c.search.latent_restarts; }));
  f.push_back(ref_int_field("search.latent_pool", [](ExperimentConfig& c) -> int& { return c.search.latent_pool; }));
  f.push_back(ref_int_field("search.horizon", [](ExperimentConfig& c) -> int& { return c.search.horizon; }));
  f.push_back(ref_vector_field("search.initial_state", [](ExperimentConfig& c) -> Vector& { return c.search.initial_state; }));

  f.push_back({"experiment.variants", [](const ExperimentConfig& c) { return join(c.variants); },
               [](ExperimentConfig& c, const std::string& v) { c.variants = parse_list(v); }});
  f.push_back({"experiment.seeds",
               [](const ExperimentConfig& c) {
                 std::vector<std::string> items;
                 for (std::uint64_t s : c.seeds) items.push_back(std::to_string(s));
                 return join(items);
               },
               [](ExperimentConfig& c, const std::string& v) {
                 c.seeds.clear();
                 for (const std::string& item : parse_list(v)) c.seeds.push_back(parse_integer<std::uint64_t>(item));
               }});
  f.push_back(ref_int_field("dr.samples", [](ExperimentConfig& c) -> int& { return c.dr.samples; }));
  f.push_back(ref_vector_field("dr.lower", [](ExperimentConfig& c) -> Vector& { return c.dr.lower; }));
  f.push_back(ref_vector_field("dr.upper", [](ExperimentConfig& c) -> Vector& { return c.dr.upper; }));
  f.push_back(ref_int_field("jumpstart.episodes", [](ExperimentConfig& c) -> int& { return c.jumpstart_episodes; }));
  f.push_back(ref_int_field("jumpstart.horizon", [](ExperimentConfig& c) -> int& { return c.jumpstart_horizon; }));
  f.push_back(ref_vector_field("jumpstart.init_half_width",
                               [](ExperimentConfig& c) -> Vector& { return c.init_half_width; }));
  f.push_back({"output.dir", [](const ExperimentConfig& c) { return c.output_dir; },
               [](ExperimentConfig& c, const std::string& v) { c.output_dir = trim(v); }});
  return f;
}

}  // namespace detail

/// Every recognised configuration key, in canonical order.
inline const std::vector<detail::ConfigField>& config_fields() {
  static const std::vector<detail::ConfigField> fields = detail::make_config_fields();
  return fields;
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : config_fields()) keys.push_back(f.key);
  return keys;
}

/// One `key = value` assignment and where it came from.
struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Splits config text into entries. `[section]` headers prefix the keys that
/// follow with "section."; `#` and `;` start comment lines.
inline std::vector<ConfigEntry> parse_config_text(const std::string& text) {
  std::vector<ConfigEntry> out;
  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = detail::trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "", "unterminated section header '" + s + "'");
      section = detail::trim(std::string_view(s).substr(1, s.size() - 2));
      if (section.empty()) throw ConfigError(line, "", "empty section name");
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "", "expected 'key = value', got '" + s + "'");
    const std::string key = detail::trim(std::string_view(s).substr(0, eq));
    if (key.empty()) throw ConfigError(line, "", "missing key before '='");
    ConfigEntry e{section.empty() ? key : section + "." + key, detail::trim(std::string_view(s).substr(eq + 1)), line};
    if (!seen.insert(e.key).second) throw ConfigError(line, e.key, "duplicate key");
    out.push_back(std::move(e));
  }
  return out;
}

/// Sets one key, reporting unknown keys and bad values as ConfigError.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value, int line = 0) {
  for (const auto& f : config_fields()) {
    if (f.key != key) continue;
    try {
      f.set(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError(line, key, e.what());
    }
    return;
  }
  throw ConfigError(line, key, "unknown key");
}

inline std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  for (const auto& f : config_fields()) {
    if (f.key == key) return f.get(cfg);
  }
  throw ConfigError(0, key, "unknown key");
}

inline void apply_config_entries(ExperimentConfig& cfg, const std::vector<ConfigEntry>& entries) {
  for (const ConfigEntry& e : entries) set_config_value(cfg, e.key, e.value, e.line);
}

/// Environment variable consulted for a key: UNCAPS_ + upper-cased key
/// with '.' replaced by '_' (search.iterations → UNCAPS_SEARCH_ITERATIONS).
inline std::string env_var_name(const std::string& key) {
  std::string out = "UNCAPS_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

inline void apply_env_overrides(ExperimentConfig& cfg, const EnvLookup& lookup = process_env) {
  for (const auto& f : config_fields()) {
    const std::string name = env_var_name(f.key);
    if (const auto v = lookup(name)) {
      try {
        f.set(cfg, *v);
      } catch (const std::exception& e) {
        throw ConfigError(0, f.key, std::string(e.what()) + " (from " + name + ")");
      }
    }
  }
}

/// Canonical `[section]` text of a config; parses back to an equal config.
inline std::string to_config_text(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : config_fields()) {
    const std::size_t dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  apply_config_entries(cfg, parse_config_text(text));
  return cfg;
}

inline bool is_search_variant(const std::string& name) {
  try {
    parse_variant(name);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

inline PlantSpec build_plant(const ExperimentConfig& cfg) { return make_mass_spring_damper(cfg.plant); }

inline void ExperimentConfig::validate() const {
  auto check = [](bool ok, const char* field, const std::string& message) {
    if (!ok) throw ConfigError(0, field, message);
  };
  PlantSpec p;
  try {
    p = make_mass_spring_damper(plant);
  } catch (const std::exception& e) {
    throw ConfigError(0, "plant", e.what());
  }
  check(p.dimension() >= 1, "plant.latent", "at least one latent parameter is required");
  check(std::isfinite(noise_std) && noise_std >= 0.0, "world.noise_std", "must be >= 0");
  try {
    search.validate();
  } catch (const std::exception& e) {
    throw ConfigError(0, "search", e.what());
  }
  if (search.initial_state.size() != 0) {
    check(search.initial_state.size() == p.state_dim, "search.initial_state",
          "expected " + std::to_string(p.state_dim) + " components");
  }
  std::set<std::string> names;
  for (const std::string& v : variants) {
    check(v == kDRVariant || is_search_variant(v), "experiment.variants", "unknown variant '" + v + "'");
    check(names.insert(v).second, "experiment.variants", "duplicate variant '" + v + "'");
  }
  check(!seeds.empty(), "experiment.seeds", "at least one seed is required");
  check(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(), "experiment.seeds",
        "seeds must be distinct");
  check(dr.samples >= 1, "dr.samples", "must be >= 1");
  check(dr.lower.size() == 0 || dr.lower.size() == p.dimension(), "dr.lower", "dimension mismatch");
  check(dr.upper.size() == 0 || dr.upper.size() == p.dimension(), "dr.upper", "dimension mismatch");
  check(jumpstart_episodes >= 1, "jumpstart.episodes", "must be >= 1");
  check(jumpstart_horizon >= 1, "jumpstart.horizon", "must be >= 1");
  check(init_half_width.size() == p.state_dim && (init_half_width.array() >= 0.0).all(), "jumpstart.init_half_width",
        "expected " + std::to_string(p.state_dim) + " non-negative components");
}

// --- Manifest ------------------------------------------------------------------

/// Run manifest: config echo (without the output location), seeds, variants
/// and library versions. Contains no timestamps, so reruns are byte-identical.
inline nlohmann::ordered_json make_manifest(const ExperimentConfig& cfg) {
  nlohmann::ordered_json m;
  m["format"] = "uncaps-manifest";
  m["versions"] = {{"uncaps", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  m["seeds"] = cfg.seeds;
  m["variants"] = cfg.variants;
  nlohmann::ordered_json echo = nlohmann::ordered_json::object();
  for (const auto& f : config_fields()) {
    if (f.key != "output.dir") echo[f.key] = f.get(cfg);
  }
  m["config"] = echo;
  return m;
}

inline ExperimentConfig config_from_manifest(const nlohmann::ordered_json& m) {
  if (!m.is_object() || !m.contains("config") || !m["config"].is_object()) {
    throw ConfigError(0, "config", "manifest has no 'config' object");
  }
  ExperimentConfig cfg;
  for (const auto& [key, value] : m["config"].items()) {
    if (!value.is_string()) throw ConfigError(0, key, "manifest values must be strings");
    set_config_value(cfg, key, value.get<std::string>());
  }
  return cfg;
}

/// Loads a config file, or a manifest.json written by a previous run.
inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(0, "", "cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::ordered_json m;
    try {
      m = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(0, "", std::string("invalid manifest JSON: ") + e.what());
    }
    return config_from_manifest(m);
  }
  return parse_experiment_config(text);
}

// --- Results -------------------------------------------------------------------

struct ResultRow {
  std::string variant;
  std::uint64_t seed = 0;
  double jumpstart_mean = 0.0;
  double jumpstart_stderr = 0.0;
  /// Best observed search objective; NaN for the DR baseline.
  double best_y = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
};

struct AggregateRow {
  std::string variant;
  int trials = 0;
  /// Mean of the per-seed jumpstart means.
  double jumpstart_mean = 0.0;
  /// sqrt(Σ stderr²) / trials.
  double jumpstart_stderr = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;

  /// One aggregate per variant, in order of first appearance.
  std::vector<AggregateRow> aggregates() const {
    std::vector<AggregateRow> out;
    std::vector<double> sq;
    for (const ResultRow& r : rows) {
      auto it = std::find_if(out.begin(), out.end(), [&](const AggregateRow& a) { return a.variant == r.variant; });
      if (it == out.end()) {
        out.push_back(AggregateRow{r.variant, 0, 0.0, 0.0});
        sq.push_back(0.0);
        it = out.end() - 1;
      }
      const auto i = static_cast<std::size_t>(it - out.begin());
      it->trials += 1;
      it->jumpstart_mean += r.jumpstart_mean;
      sq[i] += r.jumpstart_stderr * r.jumpstart_stderr;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double n = out[i].trials;
      out[i].jumpstart_mean /= n;
      out[i].jumpstart_stderr = std::sqrt(sq[i]) / n;
    }
    return out;
  }

  const ResultRow* find(const std::string& variant, std::uint64_t seed) const {
    for (const ResultRow& r : rows) {
      if (r.variant == variant && r.seed == seed) return &r;
    }
    return nullptr;
  }
};

struct CellTrace {
  std::string variant;
  std::uint64_t seed = 0;
  SearchTrace trace;
};

struct CellFailure {
  std::string variant;
  std::uint64_t seed = 0;
  std::string stage;
  std::string message;

  std::string describe() const {
    return "variant " + variant + ", seed " + std::to_string(seed) + ", stage " + stage + ": " + message;
  }
};

struct TrialTruth {
  std::uint64_t seed = 0;
  Vector theta_r;
};

struct ExperimentResult {
  ResultTable table;
  std::vector<CellTrace> traces;
  std::vector<CellFailure> failures;
  std::vector<TrialTruth> truths;

  bool ok() const { return failures.empty(); }
};

namespace detail {

// Per-trial streams under the trial seed, disjoint from the search streams.
constexpr std::uint64_t kTruthStream = 10;
constexpr std::uint64_t kJumpstartStream = 11;
constexpr std::uint64_t kDRStream = 12;

struct CellOutcome {
  std::optional<ResultRow> row;
  std::optional<SearchTrace> trace;
  std::optional<CellFailure> failure;
};

}  // namespace detail

/// Hidden real-world parameters of a trial.
inline Vector trial_theta_r(std::uint64_t seed, Eigen::Index d) {
  Rng rng = derive_rng(seed, detail::kTruthStream);
  return uniform_in_cube(d, rng);
}

/// Runs one (variant, seed) cell. Every variant of a trial is scored on the
/// same jumpstart episodes.
inline detail::CellOutcome run_cell(const ExperimentConfig& cfg, const LQRPolicyProvider& provider,
                                    const std::string& variant, std::uint64_t seed) {
  detail::CellOutcome out;
  std::string stage = "setup";
  const auto start = std::chrono::steady_clock::now();
  try {
    const RealWorldSpec world(provider.plant(), trial_theta_r(seed, provider.dimension()), cfg.noise_std);
    ResultRow row;
    row.variant = variant;
    row.seed = seed;
    ActionRule rule;
    if (variant == kDRVariant) {
      stage = "dr";
      DRConfig dc = cfg.dr;
      dc.seed = derive_seed(seed, detail::kDRStream);
      rule = dr_policy(dc, provider);
    } else {
      SearchConfig sc = cfg.search;
      sc.variant = parse_variant(variant);
      sc.seed = seed;
      stage = "search";
      SearchTrace trace = policy_search(sc, provider, world);
      row.best_y = trace.best_y();
      stage = "final_policy";
      rule = final_policy(trace, provider, sc);
      out.trace = std::move(trace);
    }
    stage = "jumpstart";
    Rng jr = derive_rng(seed, detail::kJumpstartStream);
    const JumpstartResult js =
        jumpstart_eval(world, rule, cfg.jumpstart_episodes, cfg.jumpstart_horizon, cfg.init_half_width, jr);
    row.jumpstart_mean = js.mean;
    row.jumpstart_stderr = js.std_error;
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.row = std::move(row);
  } catch (const std::exception& e) {
    out.trace.reset();
    out.failure = CellFailure{variant, seed, stage, e.what()};
  }
  return out;
}

/// Runs every (seed, variant) cell, `jobs` at a time. Rows, traces and
/// failures come out in seed-major, variant-minor config order whatever the
/// job count.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int jobs = 1) {
  cfg.validate();
  const LQRPolicyProvider provider(build_plant(cfg));
  struct Cell {
    std::uint64_t seed;
    std::string variant;
  };
  std::vector<Cell> cells;
  for (std::uint64_t seed : cfg.seeds) {
    for (const std::string& v : cfg.variants) cells.push_back({seed, v});
  }
  std::vector<detail::CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      outcomes[i] = run_cell(cfg, provider, cells[i].variant, cells[i].seed);
    }
  };
  const int n_threads = std::clamp(jobs, 1, std::max(1, static_cast<int>(cells.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  ExperimentResult result;
  for (std::uint64_t seed : cfg.seeds) result.truths.push_back({seed, trial_theta_r(seed, provider.dimension())});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    detail::CellOutcome& o = outcomes[i];
    if (o.failure) {
      result.failures.push_back(*o.failure);
      continue;
    }
    result.table.rows.push_back(*o.row);
    if (o.trace) result.traces.push_back({cells[i].variant, cells[i].seed, std::move(*o.trace)});
  }
  return result;
}

// --- Export and re-import -------------------------------------------------------

inline std::string trace_file_name(const std::string& variant, std::uint64_t seed) {
  return "trace_" + variant + "_" + std::to_string(seed) + ".csv";
}

inline std::string format_trace(const SearchTrace& trace) {
  std::string out = "iter";
  const Eigen::Index d = trace.records.empty() ? 0 : trace.records.front().theta.size();
  for (Eigen::Index i = 0; i < d; ++i) out += ",theta_" + std::to_string(i + 1);
  out += ",y,best_y\n";
  for (const IterationRecord& r : trace.records) {
    out += std::to_string(r.iteration);
    for (Eigen::Index i = 0; i < d; ++i) out += "," + format_full(r.theta[i]);
    out += "," + format_full(r.y) + "," + format_full(r.best_y) + "\n";
  }
  return out;
}

inline std::string format_results(const ResultTable& table) {
  std::string out = "variant,seed,jumpstart_mean,jumpstart_stderr,best_y\n";
  for (const ResultRow& r : table.rows) {
    out += r.variant + "," + std::to_string(r.seed) + "," + format_full(r.jumpstart_mean) + "," +
           format_full(r.jumpstart_stderr) + "," + format_full(r.best_y) + "\n";
  }
  return out;
}

inline std::string format_timing(const ResultTable& table) {
  std::string out = "variant,seed,wall_seconds\n";
  for (const ResultRow& r : table.rows) {
    out += r.variant + "," + std::to_string(r.seed) + "," + format_full(r.wall_seconds) + "\n";
  }
  return out;
}

inline std::vector<std::string> format_aggregate(const AggregateRow& a) {
  return {a.variant, std::to_string(a.trials), format_short(a.jumpstart_mean), format_short(a.jumpstart_stderr)};
}

inline std::string format_summary(const ResultTable& table) {
  std::string out = "variant,trials,jumpstart_mean,jumpstart_stderr\n";
  for (const AggregateRow& a : table.aggregates()) out += detail::join(format_aggregate(a)) + "\n";
  return out;
}

inline std::string format_truth(const std::vector<TrialTruth>& truths) {
  std::string out = "seed";
  const Eigen::Index d = truths.empty() ? 0 : truths.front().theta_r.size();
  for (Eigen::Index i = 0; i < d; ++i) out += ",theta_r_" + std::to_string(i + 1);
  out += "\n";
  for (const TrialTruth& t : truths) out += std::to_string(t.seed) + "," + detail::format_vector(t.theta_r) + "\n";
  return out;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << content;
  out.close();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                                      const std::string& expected_header_prefix) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind(expected_header_prefix, 0) != 0) {
    throw std::runtime_error("'" + path.string() + "': unexpected header");
  }
  std::vector<std::vector<std::string>> rows;
  rows.push_back(split(line, ','));
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(split(line, ','));
  }
  return rows;
}

}  // namespace detail

/// Writes traces/trace_<variant>_<seed>.csv, results.csv, summary.csv,
/// truth.csv, manifest.json and timing.csv under `dir`. Everything except
/// timing.csv depends only on the config.
inline void export_results(const ExperimentResult& result, const ExperimentConfig& cfg,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "traces");
  for (const CellTrace& t : result.traces) {
    detail::write_file(dir / "traces" / trace_file_name(t.variant, t.seed), format_trace(t.trace));
  }
  detail::write_file(dir / "results.csv", format_results(result.table));
  detail::write_file(dir / "summary.csv", format_summary(result.table));
  detail::write_file(dir / "truth.csv", format_truth(result.truths));
  detail::write_file(dir / "timing.csv", format_timing(result.table));
  detail::write_file(dir / "manifest.json", make_manifest(cfg).dump(2) + "\n");
}

/// A trace file read back.
struct TraceFile {
  std::vector<int> iterations;
  std::vector<Vector> thetas;
  std::vector<double> y;
  std::vector<double> best_y;
};

inline TraceFile read_trace_file(const std::filesystem::path& path) {
  const auto rows = detail::read_csv(path, "iter,");
  const std::size_t cols = rows.front().size();
  if (cols < 4 || rows.front()[cols - 2] != "y" || rows.front()[cols - 1] != "best_y") {
    throw std::runtime_error("'" + path.string() + "': unexpected header");
  }
  TraceFile t;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != cols) throw std::runtime_error("'" + path.string() + "': ragged row " + std::to_string(i));
    t.iterations.push_back(detail::parse_integer<int>(r[0]));
    Vector theta(static_cast<Eigen::Index>(cols - 3));
    for (std::size_t j = 1; j + 2 < cols; ++j) theta[static_cast<Eigen::Index>(j - 1)] = detail::parse_double(r[j]);
    t.thetas.push_back(std::move(theta));
    t.y.push_back(detail::parse_double(r[cols - 2]));
    t.best_y.push_back(detail::parse_double(r[cols - 1]));
  }
  return t;
}

/// Reads results.csv and timing.csv back into a table.
inline ResultTable read_results(const std::filesystem::path& dir) {
  const auto rows = detail::read_csv(dir / "results.csv", "variant,seed,jumpstart_mean,jumpstart_stderr,best_y");
  const auto timing = detail::read_csv(dir / "timing.csv", "variant,seed,wall_seconds");
  if (timing.size() != rows.size()) throw std::runtime_error("results.csv and timing.csv disagree in length");
  ResultTable table;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5 || timing[i].size() != 3 || timing[i][0] != r[0] || timing[i][1] != r[1]) {
      throw std::runtime_error("results.csv: malformed row " + std::to_string(i));
    }
    ResultRow row;
    row.variant = r[0];
    row.seed = detail::parse_integer<std::uint64_t>(r[1]);
    row.jumpstart_mean = detail::parse_double(r[2]);
    row.jumpstart_stderr = detail::parse_double(r[3]);
    row.best_y = detail::parse_double(r[4]);
    row.wall_seconds = detail::parse_double(timing[i][2]);
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// summary.csv data rows as formatted strings.
inline std::vector<std::vector<std::string>> read_summary(const std::filesystem::path& path) {
  auto rows = detail::read_csv(path, "variant,trials,jumpstart_mean,jumpstart_stderr");
  rows.erase(rows.begin());
  return rows;
}

}  // namespace uncaps
