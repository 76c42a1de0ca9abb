// Acceptance runner: seven end-to-end criteria, one PASS/FAIL line each.
// Exit status is the number of failed criteria.

#include <harmap/builder.hpp>
#include <harmap/harness.hpp>
#include <harmap/runge.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace harmap;

namespace {

const fs::path kOutRoot = fs::temp_directory_path() / "harmap_acceptance";

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

struct ConfigRun {
  int code = -1;
  std::string report;
  std::string csv;
  std::string svg;
  std::string err;
};

ConfigRun run_config(const std::string& cfg_name, const std::string& mode,
                     const std::string& out_name) {
  ConfigRun r;
  std::ostringstream err;
  fs::path out = kOutRoot / out_name;
  r.code = run_mode(std::string(HARMAP_CONFIG_DIR "/") + cfg_name, out.string(), mode,
                    CliOverrides{}, err);
  r.err = err.str();
  r.report = read_file(out / "report.txt");
  r.csv = read_file(out / "curves.csv");
  r.svg = read_file(out / "curves.svg");
  return r;
}

// Collects the first failure reason; a criterion passes iff none was recorded.
struct Check {
  std::string why;
  void require(bool ok, const std::string& detail) {
    if (!ok && why.empty()) why = detail;
  }
  bool pass() const { return why.empty(); }
};

std::vector<CertRecord> with_label(const std::vector<CertRecord>& ledger,
                                   const std::string& label) {
  std::vector<CertRecord> out;
  for (const CertRecord& r : ledger)
    if (r.label == label) out.push_back(r);
  return out;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- criterion 1

const char* kLemmaLabels[] = {"(a2)",   "(a3)",   "(d1)",   "(d2)",   "(d3)",   "(d4)",
                              "(Eq4)",  "(b1)",   "(b2)",   "(b3)",   "(b4)",   "(b5)",
                              "(b6)",   "(b7)",   "(f1)",   "(c1)",   "(c2)",   "(L4-1)",
                              "(L4-2)", "(L4-3)", "(L3-1)", "(L3-2)", "(L3-3)", "(L3-4)"};

Check criterion1() {
  Check c;
  ConfigRun r = run_config("lemma_step_demo.cfg", "lemma-step", "c1");
  c.require(r.code == 0, "exit code " + std::to_string(r.code) +
                             (r.err.empty() ? "" : " (" + r.err + ")"));
  if (r.report.empty()) {
    c.require(false, "no report written");
    return c;
  }
  ParsedReport rep = parse_report(r.report);
  for (const char* lbl : kLemmaLabels)
    c.require(!with_label(rep.ledger, lbl).empty(), std::string("label ") + lbl + " missing");
  for (const CertRecord& rec : rep.ledger)
    c.require(rec.pass, "record " + rec.label + " failed: " + rec.note);
  c.require(rep.verdict == "PASS", "report verdict " + rep.verdict);
  return c;
}

// ------------------------------------------------------------ criteria 2 and 3

struct BuilderReport {
  int code = -1;
  ParsedReport rep;
  bool parsed = false;
  std::string err;
};

BuilderReport g_builder;

void run_builder_demo() {
  ConfigRun r = run_config("build_proper_demo.cfg", "build-proper", "c2");
  g_builder.code = r.code;
  g_builder.err = r.err;
  if (!r.report.empty()) {
    g_builder.rep = parse_report(r.report);
    g_builder.parsed = true;
  }
}

Check criterion2() {
  Check c;
  c.require(g_builder.code == 0,
            "exit code " + std::to_string(g_builder.code) +
                (g_builder.err.empty() ? "" : " (" + g_builder.err + ")"));
  if (!g_builder.parsed) {
    c.require(false, "no report written");
    return c;
  }
  const std::vector<CertRecord>& ledger = g_builder.rep.ledger;
  const int K = 4;
  std::vector<CertRecord> p1 = with_label(ledger, "(p1)"), p2 = with_label(ledger, "(p2)"),
                          p3 = with_label(ledger, "(p3)"), p4 = with_label(ledger, "(p4)"),
                          grow = with_label(ledger, "(grow)"), r0 = with_label(ledger, "(R0)");
  c.require(p1.size() == K, "(p1) count " + std::to_string(p1.size()));
  c.require(p2.size() == K, "(p2) count " + std::to_string(p2.size()));
  c.require(p3.size() == K, "(p3) count " + std::to_string(p3.size()));
  c.require(p4.size() == K - 1, "(p4) count " + std::to_string(p4.size()));
  for (const std::vector<CertRecord>* set : {&p1, &p2, &p3, &p4})
    for (const CertRecord& rec : *set)
      c.require(rec.pass, "record " + rec.label + " failed: " + rec.note);
  c.require(!r0.empty() && !grow.empty(), "(R0) or (grow) records missing");
  if (!r0.empty() && !grow.empty()) {
    double R0 = r0.front().bound;
    double floor = R0 + 4.0 - 1.0 / 32.0;
    const CertRecord& last = grow.back();
    c.require(std::abs(last.bound - floor) <= 1e-9,
              "final ring floor is " + g17(last.bound) + ", expected " + g17(floor));
    c.require(last.pass && last.value.lo > floor,
              "final ring inf " + g17(last.value.lo) + " does not clear " + g17(floor));
  }
  return c;
}

Check criterion3() {
  Check c;
  c.require(g_builder.code == 0, "builder run exited " + std::to_string(g_builder.code));
  if (!g_builder.parsed) {
    c.require(false, "no report written");
    return c;
  }
  std::vector<CertRecord> prop = with_label(g_builder.rep.ledger, "(prop)");
  std::vector<CertRecord> r0 = with_label(g_builder.rep.ledger, "(R0)");
  const int K = 4;
  const double delta0 = 0.5;
  c.require(prop.size() == K, "(prop) count " + std::to_string(prop.size()) + ", expected " +
                                  std::to_string(K));
  c.require(!r0.empty(), "(R0) record missing");
  if (!r0.empty())
    for (std::size_t m = 0; m < prop.size(); ++m) {
      double want = double(m) + (r0.front().bound - delta0 - 1.0);
      c.require(std::abs(prop[m].bound - want) <= 1e-9,
                "(prop) m=" + std::to_string(m) + " bound " + g17(prop[m].bound) +
                    ", expected " + g17(want));
      c.require(prop[m].pass && prop[m].value.lo > prop[m].bound,
                "(prop) m=" + std::to_string(m) + " floor not certified");
    }
  return c;
}

// ---------------------------------------------------------------- criterion 4

ImplicitRegion annulus_region(cplx c, double rin, double rout) {
  ImplicitRegion r;
  r.clearance = [c, rin, rout](cplx z) {
    double t = std::abs(z - c);
    return std::min(t - rin, rout - t);
  };
  r.bx = Interval(c.real() - rout, c.real() + rout);
  r.by = Interval(c.imag() - rout, c.imag() + rout);
  return r;
}

TwoCompactSpec random_spec(SplitMix64& rng) {
  TwoCompactSpec spec;
  cplx ca(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
  double d = rng.uniform(2.8, 3.4);
  cplx cb = ca + std::polar(d, rng.uniform(0.0, 2.0 * kPi));
  double ra = rng.uniform(0.3, 0.6);
  double rb = rng.uniform(0.15, 0.3);
  spec.A = disk_region(ca, ra);
  spec.B = disk_region(cb, rb);
  spec.tau = rng.uniform(1.0, 10.0);
  spec.tolerance = std::pow(10.0, rng.uniform(-3.0, -1.0));
  double s = d / 3.0;
  spec.pole_home = annulus_region(cb, 0.95 * s, 1.5 * s);
  spec.channel = annulus_region(cb, 0.75 * s, 1.7 * s);
  return spec;
}

// Serialized outcome of the randomized sweep; reused by the determinism check.
std::string royden_sweep(Check& c) {
  SplitMix64 rng{0xACCE9741u};
  std::ostringstream digest;
  for (int round = 0; round < 20; ++round) {
    TwoCompactSpec spec = random_spec(rng);
    RoydenTrace trace;
    RationalFunction f;
    try {
      f = royden_approximate(spec, {}, &trace);
    } catch (const std::exception& e) {
      c.require(false, "spec " + std::to_string(round) + " threw: " + e.what());
      digest << "spec " << round << " threw\n";
      continue;
    }
    c.require(trace.cert_A <= spec.tolerance,
              "spec " + std::to_string(round) + ": cert_A " + g17(trace.cert_A) +
                  " exceeds tol " + g17(spec.tolerance));
    c.require(trace.cert_B <= spec.tolerance,
              "spec " + std::to_string(round) + ": cert_B " + g17(trace.cert_B) +
                  " exceeds tol " + g17(spec.tolerance));
    for (const PoleTerm& t : f.poles)
      c.require(spec.pole_home.clearance(t.pole.value()) > 0.0,
                "spec " + std::to_string(round) + ": pole escaped its home region");
    digest << round << ' ' << f.poles.size() << ' ' << g17(trace.cert_A) << ' '
           << g17(trace.cert_B) << ' ' << trace.quad_nodes << ' ' << trace.push_steps << '\n';
  }
  return digest.str();
}

void cauchy_halving(Check& c) {
  double tau = 3.0;
  std::vector<cplx> probes;
  for (int s = 0; s < 7; ++s) {
    probes.push_back(std::polar(2.5, 2.0 * kPi * s / 7.0));
    probes.push_back(std::polar(0.4, 2.0 * kPi * (s + 0.3) / 7.0));
  }
  auto raw_err = [&](int N) {
    RationalFunction f = cauchy_discretize(tau, cplx(0.0), 1.0, N);
    double e = 0.0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      cplx target = (i % 2 == 0) ? cplx(0.0) : cplx(tau, 0.0);
      e = std::max(e, std::abs(rf_eval_raw(f, Pt(probes[i])) - target));
    }
    return e;
  };
  double prev = raw_err(8);
  bool reached_floor = prev <= 1e-12;
  for (int N = 16; N <= 4096; N *= 2) {
    double cur = raw_err(N);
    if (prev > 1e-12)
      c.require(cur <= 0.5 * prev, "quadrature error did not halve at N = " + std::to_string(N));
    prev = cur;
    reached_floor = reached_floor || cur <= 1e-12;
  }
  c.require(reached_floor, "quadrature error never reached the 1e-12 floor");
}

std::string g_royden_digest;

Check criterion4() {
  Check c;
  g_royden_digest = royden_sweep(c);
  cauchy_halving(c);
  return c;
}

// ---------------------------------------------------------------- criterion 5

double fd_laplacian(const HarmonicPlaneMap& m, cplx z, double h, int comp) {
  auto u = [&](cplx w) {
    Vec2 v = hp_eval_raw(m, Pt(w));
    return comp == 1 ? v.x : v.y;
  };
  return (u(z + h) + u(z - h) + u(z + cplx(0.0, h)) + u(z - cplx(0.0, h)) - 4.0 * u(z)) /
         (h * h);
}

double min_pole_distance(const HarmonicPlaneMap& m, cplx z) {
  double d = HUGE_VAL;
  for (const MapTerm& t : m.terms)
    for (const PoleTerm& p : t.f.poles) d = std::min(d, std::abs(z - p.pole.value()));
  return d;
}

// A probe passes if the 5-point Laplacian decays like h^2 (ratio about 4), or
// is already at rounding level for both step sizes, which is the exact case.
void laplacian_probe(Check& c, const HarmonicPlaneMap& m, const std::string& name, cplx z,
                     std::ostringstream& digest) {
  const double h = 1.0 / 64.0;
  for (int comp = 1; comp <= 2; ++comp) {
    double a = fd_laplacian(m, z, h, comp);
    double b = fd_laplacian(m, z, h / 2.0, comp);
    Vec2 v = hp_eval_raw(m, Pt(z));
    double scale = 1.0 + std::max(std::abs(v.x), std::abs(v.y));
    digest << name << ' ' << comp << ' ' << g17(a) << ' ' << g17(b) << '\n';
    if (std::abs(a) <= 1e-8 * scale && std::abs(b) <= 1e-8 * scale) continue;
    double ratio = a / b;
    c.require(ratio >= 3.2 && ratio <= 4.8,
              name + ": Laplacian ratio " + g17(ratio) + " at z = (" + g17(z.real()) + ", " +
                  g17(z.imag()) + ") component " + std::to_string(comp));
  }
}

std::vector<std::pair<std::string, HarmonicPlaneMap>> constructed_maps(Check& c) {
  std::vector<std::pair<std::string, HarmonicPlaneMap>> maps;
  maps.emplace_back("seed z+3", map_from_rational(rf_affine(cplx(3.0), cplx(1.0))));
  maps.emplace_back("cauchy loop",
                    map_from_rational(cauchy_discretize(5.0, cplx(2.0, 1.0), 0.8, 64)));

  SplitMix64 rng{0xACCE9741u};
  TwoCompactSpec spec = random_spec(rng);
  try {
    maps.emplace_back("royden spec 0", map_from_rational(royden_approximate(spec)));
  } catch (const std::exception& e) {
    c.require(false, std::string("royden map construction threw: ") + e.what());
  }

  try {
    Corollary2Domain dom;
    dom.punctures = {cplx(0.0), cplx(2.0)};
    ProperRun run = corollary2_build(dom, 1, 0.5);
    maps.emplace_back("punctured-plane phi", run.phi);
  } catch (const std::exception& e) {
    c.require(false, std::string("puncture map construction threw: ") + e.what());
  }

  HarmonicPlaneMap deformed = maps[1].second;
  deformed = hp_deform(deformed, Frame::from_e1(Vec2{1.0, 2.0}),
                       cauchy_discretize(2.0, cplx(-1.5, 0.5), 0.4, 32));
  maps.emplace_back("deformed cauchy loop", std::move(deformed));
  return maps;
}

std::string laplacian_sweep(Check& c) {
  std::ostringstream digest;
  std::vector<std::pair<std::string, HarmonicPlaneMap>> maps = constructed_maps(c);
  SplitMix64 rng{0x5EEDCAFEu};
  for (const auto& [name, m] : maps) {
    int taken = 0;
    while (taken < 8) {
      cplx z(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
      if (min_pole_distance(m, z) < 0.5) continue;
      laplacian_probe(c, m, name, z, digest);
      ++taken;
    }
  }
  return digest.str();
}

void deform_exactness(Check& c) {
  SplitMix64 rng{0xD0F0u};
  int probes = 0;
  while (probes < 1000) {
    RationalFunction base_f = cauchy_discretize(rng.uniform(1.0, 6.0),
                                                cplx(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)),
                                                rng.uniform(0.3, 0.9), 16);
    HarmonicPlaneMap base = map_from_rational(base_f);
    Frame s = Frame::from_e1(Vec2{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
    if (!std::isfinite(s.e1.x)) continue;
    RationalFunction xi = cauchy_discretize(rng.uniform(0.5, 3.0),
                                            cplx(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)),
                                            rng.uniform(0.3, 0.9), 16);
    HarmonicPlaneMap h = hp_deform(base, s, xi);
    for (int i = 0; i < 40 && probes < 1000; ++i) {
      cplx z(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0));
      if (min_pole_distance(h, z) < 0.2) continue;
      double before = hp_component_raw(base, Pt(z), s, 2);
      double after = hp_component_raw(h, Pt(z), s, 2);
      if (before != after) {
        c.require(false, "orthogonal component moved at probe " + std::to_string(probes) +
                             ": " + g17(before) + " vs " + g17(after));
        return;
      }
      ++probes;
    }
  }
}

std::string g_laplacian_digest;

Check criterion5() {
  Check c;
  g_laplacian_digest = laplacian_sweep(c);
  deform_exactness(c);
  return c;
}

// ---------------------------------------------------------------- criterion 6

struct CsvRow {
  double z_re, z_im, f_re, f_im, abs_f;
};

std::vector<CsvRow> parse_csv(const std::string& text, Check& c) {
  std::vector<CsvRow> rows;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) {
    c.require(false, "csv header mismatch");
    return rows;
  }
  while (std::getline(is, line)) {
    CsvRow r;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &r.z_re, &r.z_im, &r.f_re, &r.f_im,
                    &r.abs_f) == 5)
      rows.push_back(r);
  }
  return rows;
}

Check criterion6() {
  Check c;
  ConfigRun r = run_config("corollary2_demo.cfg", "corollary2", "c6");
  c.require(r.code == 0, "exit code " + std::to_string(r.code) +
                             (r.err.empty() ? "" : " (" + r.err + ")"));
  if (r.report.empty()) {
    c.require(false, "no report written");
    return c;
  }
  ParsedReport rep = parse_report(r.report);
  for (const CertRecord& rec : rep.ledger)
    c.require(rec.pass, "record " + rec.label + " failed: " + rec.note);

  std::vector<CertRecord> growth = with_label(rep.ledger, "(growth)");
  c.require(!growth.empty(), "(growth) records missing");
  for (const CertRecord& g : growth)
    c.require(g.pass && g.value.lo >= 5.0 && g.bound == 5.0,
              "puncture growth " + g17(g.value.lo) + " below 5x");

  // Final circle-end boundaries must land in the prescribed annuli.
  std::vector<CertRecord> r0 = with_label(rep.ledger, "(R0)");
  const int K = 3;
  const double eta_K = std::ldexp(1.0, -(K + 1));
  report_detail::KvDoc doc = report_detail::parse_kv(r.report);
  std::vector<CsvRow> rows = parse_csv(r.csv, c);
  std::size_t curve_count = 0;
  if (const std::string* s = doc.find("curves.count"))
    curve_count = std::size_t(report_detail::num(*s, "curves.count"));
  for (std::size_t end = 0; end < r0.size(); ++end) {
    std::string want_role = "end" + std::to_string(end) + ".d2.k" + std::to_string(K);
    bool found = false;
    for (std::size_t i = 0; i < curve_count; ++i) {
      std::string pre = "curve." + std::to_string(i) + ".";
      const std::string* role = doc.find(pre + "role");
      if (!role || *role != want_role) continue;
      found = true;
      std::size_t row = std::size_t(report_detail::num(doc.need(pre + "csv_row"), "csv_row"));
      std::size_t n = std::size_t(report_detail::num(doc.need(pre + "samples"), "samples"));
      c.require(row + n <= rows.size(), want_role + ": csv rows out of range");
      double RK = r0[end].bound + double(K);
      for (std::size_t k = row; k < std::min(rows.size(), row + n); ++k)
        c.require(rows[k].abs_f > RK - eta_K && rows[k].abs_f < RK,
                  want_role + ": |phi| = " + g17(rows[k].abs_f) + " outside (" +
                      g17(RK - eta_K) + ", " + g17(RK) + ")");
    }
    c.require(found, "curve " + want_role + " missing from the export");
  }
  c.require(!r0.empty(), "(R0) records missing");
  return c;
}

// ---------------------------------------------------------------- criterion 7

Check criterion7() {
  Check c;
  const char* runs[][3] = {
      {"lemma_step_demo.cfg", "lemma-step", "lemma"},
      {"build_proper_demo.cfg", "build-proper", "builder"},
      {"corollary2_demo.cfg", "corollary2", "cor2"},
      {"corollary2_punctures.cfg", "corollary2", "punct"},
      {"export_demo.cfg", "export", "export"},
  };
  for (const auto& spec : runs) {
    ConfigRun a = run_config(spec[0], spec[1], std::string("c7_") + spec[2] + "_a");
    ConfigRun b = run_config(spec[0], spec[1], std::string("c7_") + spec[2] + "_b");
    c.require(a.code == b.code, std::string(spec[0]) + ": exit codes differ");
    c.require(!a.report.empty() && a.report == b.report,
              std::string(spec[0]) + ": reports differ between runs");
    c.require(a.csv == b.csv, std::string(spec[0]) + ": csv outputs differ between runs");
    c.require(a.svg == b.svg, std::string(spec[0]) + ": svg outputs differ between runs");
  }

  Check scratch;
  std::string royden_again = royden_sweep(scratch);
  c.require(royden_again == g_royden_digest, "randomized approximation sweep is not reproducible");
  std::string lap_again = laplacian_sweep(scratch);
  c.require(lap_again == g_laplacian_digest, "Laplacian sweep is not reproducible");
  return c;
}

}  // namespace

int main() {
  std::error_code ec;
  fs::remove_all(kOutRoot, ec);

  struct Entry {
    const char* name;
    Check (*fn)();
  };
  run_builder_demo();
  const Entry entries[] = {
      {"C1 lemma-step demo, all certificates positive", criterion1},
      {"C2 iteration K=4, bands and final ring floor", criterion2},
      {"C3 properness floors match m + (R0 - delta0 - 1)", criterion3},
      {"C4 randomized approximation sweep and quadrature halving", criterion4},
      {"C5 harmonicity scaling and deformation exactness", criterion5},
      {"C6 corollary-2 demo, boundary annuli and puncture growth", criterion6},
      {"C7 determinism, byte-identical artifacts", criterion7},
  };
  int failures = 0;
  for (const Entry& e : entries) {
    Check c = e.fn();
    if (c.pass()) {
      std::cout << e.name << ": PASS\n";
    } else {
      std::cout << e.name << ": FAIL (" << c.why << ")\n";
      ++failures;
    }
  }
  return failures;
}
