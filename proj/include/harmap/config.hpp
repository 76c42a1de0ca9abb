#pragma once

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "harmonic.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// Run configuration: a line-oriented `section.key = value` text format.
// Blank lines and lines whose first non-space character is '#' are comments.
// Keys may repeat where a list is expected; scalar getters reject duplicates.
// Every diagnostic carries the config path and the 1-based line number.
// ---------------------------------------------------------------------------

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct RunConfig {
  std::string path;
  std::vector<ConfigEntry> entries;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.') return false;
  return true;
}

inline std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

[[noreturn]] inline void fail(const RunConfig& cfg, int line, const std::string& msg) {
  std::ostringstream os;
  os << cfg.path << ":" << line << ": " << msg;
  throw ConfigError(os.str());
}

[[noreturn]] inline void fail(const RunConfig& cfg, const std::string& msg) {
  throw ConfigError(cfg.path + ": " + msg);
}

inline double parse_double(const RunConfig& cfg, const ConfigEntry& e, const std::string& tok) {
  const char* c = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(c, &end);
  if (end != c + tok.size() || tok.empty())
    fail(cfg, e.line, "key '" + e.key + "': '" + tok + "' is not a number");
  return v;
}

inline long long parse_int(const RunConfig& cfg, const ConfigEntry& e, const std::string& tok) {
  const char* c = tok.c_str();
  char* end = nullptr;
  long long v = std::strtoll(c, &end, 10);
  if (end != c + tok.size() || tok.empty())
    fail(cfg, e.line, "key '" + e.key + "': '" + tok + "' is not an integer");
  return v;
}

}  // namespace config_detail

inline RunConfig parse_config_text(const std::string& text, const std::string& path) {
  using namespace config_detail;
  RunConfig cfg;
  cfg.path = path;
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    std::string s = trim(raw);
    if (s.empty() || s.front() == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) fail(cfg, line, "expected 'key = value'");
    ConfigEntry e;
    e.key = trim(s.substr(0, eq));
    e.value = trim(s.substr(eq + 1));
    e.line = line;
    if (!valid_key(e.key)) fail(cfg, line, "malformed key '" + e.key + "'");
    cfg.entries.push_back(std::move(e));
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

// ---------------------------------------------------------------------------
// Typed access.
// ---------------------------------------------------------------------------

namespace config_detail {

inline std::vector<const ConfigEntry*> find_all(const RunConfig& cfg, const std::string& key) {
  std::vector<const ConfigEntry*> out;
  for (const ConfigEntry& e : cfg.entries)
    if (e.key == key) out.push_back(&e);
  return out;
}

inline const ConfigEntry& get_one(const RunConfig& cfg, const std::string& key) {
  auto all = find_all(cfg, key);
  if (all.empty()) fail(cfg, "missing required key '" + key + "'");
  if (all.size() > 1) fail(cfg, all[1]->line, "duplicate key '" + key + "'");
  return *all[0];
}

inline const ConfigEntry* get_opt(const RunConfig& cfg, const std::string& key) {
  auto all = find_all(cfg, key);
  if (all.empty()) return nullptr;
  if (all.size() > 1) fail(cfg, all[1]->line, "duplicate key '" + key + "'");
  return all[0];
}

inline std::vector<double> doubles_of(const RunConfig& cfg, const ConfigEntry& e,
                                      std::size_t want = 0) {
  std::vector<double> out;
  for (const std::string& t : split_tokens(e.value)) out.push_back(parse_double(cfg, e, t));
  if (want != 0 && out.size() != want) {
    std::ostringstream os;
    os << "key '" << e.key << "': expected " << want << " numbers, got " << out.size();
    fail(cfg, e.line, os.str());
  }
  return out;
}

inline double double_of(const RunConfig& cfg, const ConfigEntry& e) {
  return doubles_of(cfg, e, 1)[0];
}

inline long long int_of(const RunConfig& cfg, const ConfigEntry& e) {
  auto toks = split_tokens(e.value);
  if (toks.size() != 1) fail(cfg, e.line, "key '" + e.key + "': expected one integer");
  return parse_int(cfg, e, toks[0]);
}

inline Circline circline_of(const RunConfig& cfg, const ConfigEntry& e) {
  auto toks = split_tokens(e.value);
  if (toks.size() != 4)
    fail(cfg, e.line, "key '" + e.key + "': expected 'cx cy radius bounded|unbounded'");
  Circline c;
  c.center = cplx(parse_double(cfg, e, toks[0]), parse_double(cfg, e, toks[1]));
  c.radius = parse_double(cfg, e, toks[2]);
  if (toks[3] == "bounded")
    c.bounded = true;
  else if (toks[3] == "unbounded")
    c.bounded = false;
  else
    fail(cfg, e.line, "key '" + e.key + "': orientation must be bounded or unbounded");
  if (!(c.radius > 0.0)) fail(cfg, e.line, "key '" + e.key + "': radius must be positive");
  return c;
}

}  // namespace config_detail

// ---------------------------------------------------------------------------
// Seed map block: `seed.holo.*` and `seed.anti.*` each describe a rational
// function by a coefficient list and repeatable pole lines. The anti part
// enters the plane map through its conjugate, so the two parts together span
// every finite-term harmonic map the library builds.
//   seed.<part>.poly = c0_re c0_im c1_re c1_im ...
//   seed.<part>.pole = px py c0_re c0_im [c1_re c1_im ...]
// ---------------------------------------------------------------------------

namespace config_detail {

inline RationalFunction seed_part(const RunConfig& cfg, const std::string& part) {
  RationalFunction f;
  if (const ConfigEntry* e = get_opt(cfg, "seed." + part + ".poly")) {
    auto v = doubles_of(cfg, *e);
    if (v.size() % 2 != 0)
      fail(cfg, e->line, "key '" + e->key + "': coefficients come in re/im pairs");
    for (std::size_t i = 0; i + 1 < v.size(); i += 2) f.poly.emplace_back(v[i], v[i + 1]);
  }
  for (const ConfigEntry* e : find_all(cfg, "seed." + part + ".pole")) {
    auto v = doubles_of(cfg, *e);
    if (v.size() < 4 || v.size() % 2 != 0)
      fail(cfg, e->line,
           "key '" + e->key + "': expected 'px py c0_re c0_im [c1_re c1_im ...]'");
    PoleTerm t;
    t.pole = Pt(cplx(v[0], v[1]));
    for (std::size_t i = 2; i + 1 < v.size(); i += 2) t.coef.emplace_back(v[i], v[i + 1]);
    f.poles.push_back(std::move(t));
  }
  return f;
}

}  // namespace config_detail

inline HarmonicPlaneMap seed_map_from_config(const RunConfig& cfg) {
  RationalFunction holo = config_detail::seed_part(cfg, "holo");
  RationalFunction anti = config_detail::seed_part(cfg, "anti");
  HarmonicPlaneMap m;
  if (!holo.empty()) m = map_from_rational(holo);
  if (!anti.empty()) {
    m.terms.push_back(MapTerm{anti, Vec2{1.0, 0.0}});
    m.terms.push_back(MapTerm{rf_scale(anti, cplx(0.0, 1.0)), Vec2{0.0, 1.0}});
  }
  return m;
}

// ---------------------------------------------------------------------------
// Mode-level validation: the mode fixes the set of admissible keys, so a
// typo is a config error at its own line rather than a silently ignored knob.
// ---------------------------------------------------------------------------

namespace config_detail {

inline bool positive_index(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

inline bool key_allowed(const std::string& mode, const std::string& key) {
  if (key == "run.mode") return true;
  bool seed = key == "seed.holo.poly" || key == "seed.holo.pole" || key == "seed.anti.poly" ||
              key == "seed.anti.pole";
  bool knobs = key == "budgets.max_certified_ops" || key == "budgets.max_poles" ||
               key == "budgets.max_push_steps" || key == "safety.epsilon0" ||
               key == "safety.retries";
  bool grid = key == "grid.curve_samples";
  if (mode == "lemma-step")
    return seed || knobs || grid || key == "geometry.d1" || key == "geometry.d2" ||
           key == "budgets.r" || key == "budgets.R" || key == "budgets.eps1" ||
           key == "budgets.eps2" || key == "budgets.eps3";
  if (mode == "build-proper") {
    if (seed || knobs || grid || key == "budgets.delta0" || key == "budgets.K" ||
        key == "geometry.compact")
      return true;
    if (key.rfind("geometry.end.", 0) == 0) {
      std::string rest = key.substr(13);
      std::size_t dot = rest.find('.');
      if (dot == std::string::npos) return false;
      std::string field = rest.substr(dot + 1);
      return positive_index(rest.substr(0, dot)) && (field == "outer" || field == "inner");
    }
    return false;
  }
  if (mode == "corollary2")
    return knobs || grid || key == "geometry.circle" || key == "geometry.puncture" ||
           key == "budgets.delta0" || key == "budgets.K";
  if (mode == "verify") return key == "verify.report";
  if (mode == "export") return seed || grid || key == "curve.circle";
  return false;
}

}  // namespace config_detail

inline std::string config_mode(const RunConfig& cfg) {
  const ConfigEntry& e = config_detail::get_one(cfg, "run.mode");
  static const char* known[] = {"lemma-step", "build-proper", "corollary2", "verify", "export"};
  for (const char* k : known)
    if (e.value == k) return e.value;
  config_detail::fail(cfg, e.line, "unknown mode '" + e.value + "'");
}

inline void validate_keys(const RunConfig& cfg, const std::string& mode) {
  for (const ConfigEntry& e : cfg.entries)
    if (!config_detail::key_allowed(mode, e.key))
      config_detail::fail(cfg, e.line, "key '" + e.key + "' is not valid in mode " + mode);
}

// Shared scalar lookups used by the mode drivers.

inline double config_positive(const RunConfig& cfg, const std::string& key) {
  const ConfigEntry& e = config_detail::get_one(cfg, key);
  double v = config_detail::double_of(cfg, e);
  if (!(v > 0.0)) config_detail::fail(cfg, e.line, "key '" + key + "' must be positive");
  return v;
}

inline int config_int_min(const RunConfig& cfg, const std::string& key, int lo, int fallback) {
  const ConfigEntry* e = config_detail::get_opt(cfg, key);
  if (!e) return fallback;
  long long v = config_detail::int_of(cfg, *e);
  if (v < lo) {
    std::ostringstream os;
    os << "key '" << key << "' must be >= " << lo;
    config_detail::fail(cfg, e->line, os.str());
  }
  return int(v);
}

inline Circline config_circline(const RunConfig& cfg, const std::string& key) {
  return config_detail::circline_of(cfg, config_detail::get_one(cfg, key));
}

}  // namespace harmap
