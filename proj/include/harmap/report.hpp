#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "exportio.hpp"
#include "lemma.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// Run reports are flat `key = value` documents in the same grammar as the
// configs, so they diff cleanly and the verify mode can re-read them. Wall
// times go to a separate sidecar; the report itself must be byte-identical
// across repeated runs.
// ---------------------------------------------------------------------------

struct CurveMeta {
  std::string role;
  int depth = 0;
  std::size_t samples = 0;
  std::size_t csv_row = 0;
};

struct RunReport {
  std::string mode;
  std::vector<ConfigEntry> config_echo;
  std::vector<CertRecord> ledger;
  std::string map_name;
  std::vector<MapTerm> map_terms;
  std::vector<CurveMeta> curves;
  std::string error_type;
  std::string error_what;

  bool verdict() const {
    if (!error_type.empty()) return false;
    for (const CertRecord& r : ledger)
      if (!r.pass) return false;
    return true;
  }
};

inline const char* kBudgetMappingNote =
    "eps1 <- delta * eta(k+1); eps2 <- eta(k+1); eps3 <- eta(k+1)";

namespace report_detail {

inline void kv(std::string& out, const std::string& key, const std::string& value) {
  out += key;
  out += " = ";
  out += value;
  out += '\n';
}

inline std::string pairs_text(const std::vector<cplx>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += fmt17(v[i].real());
    s += ' ';
    s += fmt17(v[i].imag());
  }
  return s;
}

}  // namespace report_detail

inline std::string render_report(const RunReport& rep) {
  using report_detail::kv;
  std::string out;
  kv(out, "report.schema", "1");
  kv(out, "report.mode", rep.mode);
  kv(out, "report.verdict", rep.verdict() ? "PASS" : "FAIL");
  kv(out, "report.budget_mapping", kBudgetMappingNote);

  for (std::size_t i = 0; i < rep.config_echo.size(); ++i) {
    std::string p = "config." + std::to_string(i);
    kv(out, p + ".key", rep.config_echo[i].key);
    kv(out, p + ".value", rep.config_echo[i].value);
  }

  kv(out, "ledger.count", std::to_string(rep.ledger.size()));
  for (std::size_t i = 0; i < rep.ledger.size(); ++i) {
    const CertRecord& r = rep.ledger[i];
    std::string p = "ledger." + std::to_string(i);
    kv(out, p + ".label", r.label);
    kv(out, p + ".value.lo", fmt17(r.value.lo));
    kv(out, p + ".value.hi", fmt17(r.value.hi));
    kv(out, p + ".op", std::string(1, r.op));
    kv(out, p + ".bound", fmt17(r.bound));
    kv(out, p + ".pass", r.pass ? "true" : "false");
    kv(out, p + ".note", r.note);
  }

  if (!rep.map_name.empty()) {
    kv(out, "map.name", rep.map_name);
    kv(out, "map.terms", std::to_string(rep.map_terms.size()));
    for (std::size_t i = 0; i < rep.map_terms.size(); ++i) {
      const MapTerm& t = rep.map_terms[i];
      std::string p = "map.term." + std::to_string(i);
      kv(out, p + ".dir", fmt17(t.dir.x) + " " + fmt17(t.dir.y));
      kv(out, p + ".poly", report_detail::pairs_text(t.f.poly));
      kv(out, p + ".poles", std::to_string(t.f.poles.size()));
      for (std::size_t j = 0; j < t.f.poles.size(); ++j) {
        const PoleTerm& pt = t.f.poles[j];
        cplx pos = pt.pole.value();
        kv(out, p + ".pole." + std::to_string(j),
           fmt17(pos.real()) + " " + fmt17(pos.imag()) + " " +
               report_detail::pairs_text(pt.coef));
      }
    }
  }

  kv(out, "curves.count", std::to_string(rep.curves.size()));
  for (std::size_t i = 0; i < rep.curves.size(); ++i) {
    const CurveMeta& c = rep.curves[i];
    std::string p = "curve." + std::to_string(i);
    kv(out, p + ".role", c.role);
    kv(out, p + ".depth", std::to_string(c.depth));
    kv(out, p + ".samples", std::to_string(c.samples));
    kv(out, p + ".csv_row", std::to_string(c.csv_row));
  }

  if (!rep.error_type.empty()) {
    kv(out, "error.type", rep.error_type);
    kv(out, "error.what", rep.error_what);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report re-reading for the verify mode. The parser is strict about the
// fields it consumes and tolerant about fields it does not know, so future
// additions do not invalidate stored reports.
// ---------------------------------------------------------------------------

struct ParsedReport {
  std::string mode;
  std::string verdict;
  bool has_budget_mapping = false;
  std::vector<CertRecord> ledger;
  std::string map_name;
  std::size_t map_term_count = 0;
  bool map_wellformed = true;
  std::string error_type;
};

namespace report_detail {

struct KvDoc {
  std::map<std::string, std::string> kv;

  const std::string* find(const std::string& k) const {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  }
  std::string need(const std::string& k) const {
    const std::string* v = find(k);
    if (!v) throw ConfigError("report: missing key '" + k + "'");
    return *v;
  }
};

inline KvDoc parse_kv(const std::string& text) {
  KvDoc doc;
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    std::string s = config_detail::trim(raw);
    if (s.empty() || s.front() == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("report line " + std::to_string(line) + ": expected 'key = value'");
    std::string key = config_detail::trim(s.substr(0, eq));
    if (doc.kv.count(key))
      throw ConfigError("report line " + std::to_string(line) + ": duplicate key '" + key + "'");
    doc.kv[key] = config_detail::trim(s.substr(eq + 1));
  }
  return doc;
}

inline double num(const std::string& s, const std::string& key) {
  const char* c = s.c_str();
  char* end = nullptr;
  double v = std::strtod(c, &end);
  if (end != c + s.size() || s.empty())
    throw ConfigError("report: key '" + key + "': '" + s + "' is not a number");
  return v;
}

inline bool finite_pairs(const std::string& s, std::size_t min_tokens) {
  std::vector<std::string> toks = config_detail::split_tokens(s);
  if (toks.size() < min_tokens || toks.size() % 2 != 0) return false;
  for (const std::string& t : toks) {
    const char* c = t.c_str();
    char* end = nullptr;
    double v = std::strtod(c, &end);
    if (end != c + t.size() || !std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace report_detail

inline ParsedReport parse_report(const std::string& text) {
  using namespace report_detail;
  KvDoc doc = parse_kv(text);
  ParsedReport rep;
  rep.mode = doc.need("report.mode");
  rep.verdict = doc.need("report.verdict");
  rep.has_budget_mapping = doc.find("report.budget_mapping") != nullptr;
  if (const std::string* e = doc.find("error.type")) rep.error_type = *e;

  std::size_t n = std::size_t(num(doc.need("ledger.count"), "ledger.count"));
  for (std::size_t i = 0; i < n; ++i) {
    std::string p = "ledger." + std::to_string(i);
    CertRecord r;
    r.label = doc.need(p + ".label");
    r.value = Interval(num(doc.need(p + ".value.lo"), p), num(doc.need(p + ".value.hi"), p));
    std::string op = doc.need(p + ".op");
    if (op.size() != 1) throw ConfigError("report: bad op in " + p);
    r.op = op[0];
    r.bound = num(doc.need(p + ".bound"), p);
    std::string pass = doc.need(p + ".pass");
    if (pass != "true" && pass != "false")
      throw ConfigError("report: bad pass flag in " + p);
    r.pass = pass == "true";
    if (const std::string* note = doc.find(p + ".note")) r.note = *note;
    rep.ledger.push_back(std::move(r));
  }

  if (const std::string* name = doc.find("map.name")) {
    rep.map_name = *name;
    rep.map_term_count = std::size_t(num(doc.need("map.terms"), "map.terms"));
    for (std::size_t i = 0; i < rep.map_term_count; ++i) {
      std::string p = "map.term." + std::to_string(i);
      const std::string* dir = doc.find(p + ".dir");
      const std::string* poly = doc.find(p + ".poly");
      const std::string* poles = doc.find(p + ".poles");
      if (!dir || !poly || !poles || !finite_pairs(*dir, 2)) {
        rep.map_wellformed = false;
        break;
      }
      if (!poly->empty() && !finite_pairs(*poly, 2)) rep.map_wellformed = false;
      std::size_t np = std::size_t(num(*poles, p + ".poles"));
      for (std::size_t j = 0; j < np; ++j) {
        const std::string* pl = doc.find(p + ".pole." + std::to_string(j));
        if (!pl || !finite_pairs(*pl, 4)) rep.map_wellformed = false;
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// File output.
// ---------------------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

struct Timings {
  std::vector<std::pair<std::string, double>> stages;

  void add(const std::string& name, double seconds) { stages.emplace_back(name, seconds); }

  std::string render() const {
    std::string out;
    for (const auto& [name, sec] : stages) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "stage.%s = %.3fs\n", name.c_str(), sec);
      out += buf;
    }
    return out;
  }
};

}  // namespace harmap
