#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "builder.hpp"
#include "config.hpp"
#include "exportio.hpp"
#include "report.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// Mode drivers. Each driver parses its part of the config up front (so key
// errors surface as config errors before any work), then runs the pipeline
// under a classifier that turns thrown failures into report diagnostics.
// Exit codes: 0 all certificates pass, 2 certificate failure, 3 geometric
// construction failure, 4 config error.
// ---------------------------------------------------------------------------

struct CliOverrides {
  int depth = 0;  // replaces budgets.K when positive
  int grid = 0;   // replaces grid.curve_samples when positive
};

namespace harness_detail {

template <class Fn>
int classify_run(RunReport& rep, Fn&& fn) {
  try {
    fn();
  } catch (const FeasibilityError& ex) {
    rep.error_type = "FeasibilityError";
    rep.error_what = ex.what();
    return 3;
  } catch (const CertError& ex) {
    rep.error_type = "CertError";
    rep.error_what = ex.what();
    return 2;
  } catch (const GeomError& ex) {
    rep.error_type = "GeomError";
    rep.error_what = ex.what();
    return 3;
  }
  return rep.verdict() ? 0 : 2;
}

inline LemmaOptions lemma_options_from(const RunConfig& cfg) {
  using namespace config_detail;
  LemmaOptions opt;
  if (const ConfigEntry* e = get_opt(cfg, "budgets.max_certified_ops")) {
    opt.budgets.max_certified_ops = double_of(cfg, *e);
    if (!(opt.budgets.max_certified_ops > 0.0))
      fail(cfg, e->line, "budgets.max_certified_ops must be positive");
  }
  if (const ConfigEntry* e = get_opt(cfg, "budgets.max_poles")) {
    long long v = int_of(cfg, *e);
    if (v <= 0) fail(cfg, e->line, "budgets.max_poles must be positive");
    opt.budgets.max_poles = std::size_t(v);
  }
  if (const ConfigEntry* e = get_opt(cfg, "budgets.max_push_steps")) {
    long long v = int_of(cfg, *e);
    if (v <= 0) fail(cfg, e->line, "budgets.max_push_steps must be positive");
    opt.budgets.max_push_steps = std::size_t(v);
  }
  if (const ConfigEntry* e = get_opt(cfg, "safety.epsilon0")) {
    opt.epsilon0_override = double_of(cfg, *e);
    if (!(opt.epsilon0_override > 0.0)) fail(cfg, e->line, "safety.epsilon0 must be positive");
  }
  if (const ConfigEntry* e = get_opt(cfg, "safety.retries")) {
    long long v = int_of(cfg, *e);
    if (v < 0) fail(cfg, e->line, "safety.retries must be >= 0");
    opt.max_retries = int(v);
  }
  return opt;
}

inline void eval_onto(const HarmonicPlaneMap& m, ExportCurve& c) {
  c.w.clear();
  c.w.reserve(c.z.size());
  for (const cplx& z : c.z) {
    Vec2 v = hp_eval_raw(m, Pt(z));
    if (!std::isfinite(v.x) || !std::isfinite(v.y))
      throw GeomError("map is not evaluable on an exported curve point");
    c.w.push_back(v);
  }
}

inline void eval_onto(const ProperRun& run, ExportCurve& c) {
  c.w.clear();
  c.w.reserve(c.z.size());
  for (const cplx& z : c.z) {
    Vec2 v = proper_eval(run, Pt(z));
    if (!std::isfinite(v.x) || !std::isfinite(v.y))
      throw GeomError("map is not evaluable on an exported curve point");
    c.w.push_back(v);
  }
}

inline std::vector<cplx> contour_points(const ParamCurve& c) {
  std::vector<cplx> out;
  out.reserve(c.v.size());
  for (const Pt& p : c.v) out.push_back(p.value());
  return out;
}

inline void append_prefixed(std::vector<CertRecord>& dst, const std::vector<CertRecord>& src,
                            const std::string& prefix) {
  for (const CertRecord& r : src) {
    CertRecord c = r;
    c.note = prefix + c.note;
    dst.push_back(std::move(c));
  }
}

// Shared curve assembly for iterated runs: per end the shallow-disk circles
// of every depth plus the final carved contour, pulled back to the plane.
inline void proper_run_curves(const ProperRun& run, int grid,
                              std::vector<ExportCurve>& curves) {
  using namespace builder_detail;
  for (std::size_t j = 0; j < run.ends.size(); ++j) {
    const EndIteration& it = run.ends[j];
    cplx center = end_plane_center(it);
    for (std::size_t k = 0; k < it.D2.size(); ++k) {
      ExportCurve c;
      c.role = "end" + std::to_string(j) + ".d2.k" + std::to_string(k);
      c.depth = int(k);
      c.z = sample_circle(center, pullback_radius(it, it.D2[k].radius), grid);
      eval_onto(run, c);
      curves.push_back(std::move(c));
    }
    if (!it.D1_carved.empty()) {
      ExportCurve c;
      c.role = "end" + std::to_string(j) + ".carved";
      c.depth = it.depth;
      c.z = contour_points(it.D1_carved.back().boundary);
      if (!it.chart_identity) {
        Moebius inv = it.chart.inverse();
        for (cplx& z : c.z) z = inv.apply(z);
      }
      eval_onto(run, c);
      curves.push_back(std::move(c));
    }
  }
  for (std::size_t i = 0; i < run.punctures.size(); ++i)
    for (double rho : {1e-2, 1e-3}) {
      char tag[32];
      std::snprintf(tag, sizeof tag, "%g", rho);
      ExportCurve c;
      c.role = "puncture" + std::to_string(i) + ".rho" + tag;
      c.depth = 0;
      c.z = sample_circle(run.punctures[i], rho, grid);
      eval_onto(run, c);
      curves.push_back(std::move(c));
    }
}

// ---------------------------------------------------------------------------
// lemma-step
// ---------------------------------------------------------------------------

inline int drive_lemma_step(const RunConfig& cfg, int grid, const CliOverrides&,
                            RunReport& rep, std::vector<ExportCurve>& curves) {
  LemmaInput in;
  in.D1 = config_circline(cfg, "geometry.d1");
  in.D2 = config_circline(cfg, "geometry.d2");
  in.F = seed_map_from_config(cfg);
  in.r = config_positive(cfg, "budgets.r");
  in.R = config_positive(cfg, "budgets.R");
  in.eps1 = config_positive(cfg, "budgets.eps1");
  in.eps2 = config_positive(cfg, "budgets.eps2");
  in.eps3 = config_positive(cfg, "budgets.eps3");
  LemmaOptions opt = lemma_options_from(cfg);

  return classify_run(rep, [&] {
    LemmaRun run = run_lemma(in, opt);
    rep.ledger = run.records;
    rep.map_name = "G";
    rep.map_terms = run.output.G.terms;

    ExportCurve d1{"d1", 0, sample_circle(in.D1.center, in.D1.radius, grid), {}};
    ExportCurve d2{"d2", 0, sample_circle(in.D2.center, in.D2.radius, grid), {}};
    ExportCurve carved{"carved", 1, contour_points(run.output.D.boundary), {}};
    for (ExportCurve* c : {&d1, &d2, &carved}) eval_onto(run.output.G, *c);
    curves = {std::move(d1), std::move(d2), std::move(carved)};
  });
}

// ---------------------------------------------------------------------------
// build-proper
// ---------------------------------------------------------------------------

inline int drive_build_proper(const RunConfig& cfg, int grid, const CliOverrides& ov,
                              RunReport& rep, std::vector<ExportCurve>& curves) {
  using namespace config_detail;
  std::vector<EndSpec> ends;
  std::size_t end_keys = 0;
  for (const ConfigEntry& e : cfg.entries)
    if (e.key.rfind("geometry.end.", 0) == 0) ++end_keys;
  for (int i = 0;; ++i) {
    std::string base = "geometry.end." + std::to_string(i) + ".";
    const ConfigEntry* outer = get_opt(cfg, base + "outer");
    const ConfigEntry* inner = get_opt(cfg, base + "inner");
    if (!outer && !inner) break;
    if (!outer || !inner)
      fail(cfg, (outer ? outer : inner)->line,
           "end " + std::to_string(i) + " needs both outer and inner");
    EndSpec spec;
    spec.outer = circline_of(cfg, *outer);
    spec.inner = circline_of(cfg, *inner);
    ends.push_back(spec);
  }
  if (ends.empty()) fail(cfg, "build-proper needs at least one geometry.end block");
  if (end_keys != 2 * ends.size())
    fail(cfg, "geometry.end indices must be contiguous from 0");

  HarmonicPlaneMap F = seed_map_from_config(cfg);
  double delta0 = config_positive(cfg, "budgets.delta0");
  int K = config_int_min(cfg, "budgets.K", 1, 1);
  if (!get_opt(cfg, "budgets.K") && ov.depth <= 0) fail(cfg, "missing required key 'budgets.K'");
  if (ov.depth > 0) K = ov.depth;
  const ConfigEntry* compact = get_opt(cfg, "geometry.compact");
  cplx compact_c;
  double compact_r = 0.0;
  if (compact) {
    auto v = doubles_of(cfg, *compact, 3);
    compact_c = cplx(v[0], v[1]);
    compact_r = v[2];
    if (!(compact_r > 0.0)) fail(cfg, compact->line, "compact radius must be positive");
  }
  LemmaOptions opt = lemma_options_from(cfg);

  return classify_run(rep, [&] {
    InitRun init = init_run(F, ends, delta0);
    rep.ledger = init.records;

    std::vector<EndIteration> its;
    for (std::size_t i = 0; i < ends.size(); ++i) {
      Schedule sched;
      sched.R0 = init.ends[i].R0;
      sched.K = K;
      sched.delta = init.delta;
      EndIteration it = iterate_end(init, int(i), sched, opt);
      append_prefixed(rep.ledger, it.records, "end " + std::to_string(i) + "; ");
      its.push_back(std::move(it));
    }

    ProperRun run = compose_ends(its, delta0, init.shift);
    append_prefixed(rep.ledger, run.records, "");
    if (compact)
      rep.ledger.push_back(
          density_certificate(F, run, disk_region(compact_c, compact_r), delta0));

    rep.map_name = "phi";
    rep.map_terms = run.phi.terms;
    proper_run_curves(run, grid, curves);
  });
}

// ---------------------------------------------------------------------------
// corollary2
// ---------------------------------------------------------------------------

inline int drive_corollary2(const RunConfig& cfg, int grid, const CliOverrides& ov,
                            RunReport& rep, std::vector<ExportCurve>& curves) {
  using namespace config_detail;
  Corollary2Domain dom;
  for (const ConfigEntry* e : find_all(cfg, "geometry.circle")) {
    auto v = doubles_of(cfg, *e, 3);
    if (!(v[2] > 0.0)) fail(cfg, e->line, "circle radius must be positive");
    dom.circles.push_back(Circline{cplx(v[0], v[1]), v[2], true});
  }
  for (const ConfigEntry* e : find_all(cfg, "geometry.puncture")) {
    auto v = doubles_of(cfg, *e, 2);
    dom.punctures.emplace_back(v[0], v[1]);
  }
  double delta0 = config_positive(cfg, "budgets.delta0");
  int K = config_int_min(cfg, "budgets.K", 1, 1);
  if (!get_opt(cfg, "budgets.K") && ov.depth <= 0) fail(cfg, "missing required key 'budgets.K'");
  if (ov.depth > 0) K = ov.depth;
  LemmaOptions opt = lemma_options_from(cfg);

  return classify_run(rep, [&] {
    ProperRun run = corollary2_build(dom, K, delta0, opt);
    for (std::size_t j = 0; j < run.ends.size(); ++j)
      append_prefixed(rep.ledger, run.ends[j].records, "end " + std::to_string(j) + "; ");
    append_prefixed(rep.ledger, run.records, "");
    rep.map_name = "phi";
    rep.map_terms = run.phi.terms;
    proper_run_curves(run, grid, curves);
  });
}

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

inline int drive_export(const RunConfig& cfg, int grid, const CliOverrides&, RunReport& rep,
                        std::vector<ExportCurve>& curves) {
  using namespace config_detail;
  HarmonicPlaneMap F = seed_map_from_config(cfg);
  struct Spec {
    cplx center;
    double radius;
    int samples;
    int depth;
  };
  std::vector<Spec> specs;
  for (const ConfigEntry* e : find_all(cfg, "curve.circle")) {
    auto v = doubles_of(cfg, *e, 5);
    Spec s{cplx(v[0], v[1]), v[2], int(v[3]), int(v[4])};
    if (!(s.radius > 0.0)) fail(cfg, e->line, "curve radius must be positive");
    if (double(s.samples) != v[3] || (s.samples != 0 && s.samples < 2))
      fail(cfg, e->line, "curve samples must be 0 (default) or an integer >= 2");
    if (double(s.depth) != v[4] || s.depth < 0)
      fail(cfg, e->line, "curve depth must be a non-negative integer");
    specs.push_back(s);
  }

  return classify_run(rep, [&] {
    rep.map_name = "F";
    rep.map_terms = F.terms;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      ExportCurve c;
      c.role = "curve" + std::to_string(i);
      c.depth = specs[i].depth;
      c.z = sample_circle(specs[i].center, specs[i].radius,
                          specs[i].samples > 0 ? specs[i].samples : grid);
      eval_onto(F, c);
      curves.push_back(std::move(c));
    }
  });
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

inline int drive_verify(const RunConfig& cfg, int, const CliOverrides&, RunReport& rep,
                        std::vector<ExportCurve>&) {
  using namespace config_detail;
  const ConfigEntry& e = get_one(cfg, "verify.report");
  std::filesystem::path p(e.value);
  if (p.is_relative()) p = std::filesystem::path(cfg.path).parent_path() / p;
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(cfg, e.line, "stored report '" + p.string() + "' cannot be opened");
  std::ostringstream buf;
  buf << in.rdbuf();

  return classify_run(rep, [&] {
    ParsedReport stored;
    std::string inconsistency;
    try {
      stored = parse_report(buf.str());
    } catch (const ConfigError& ex) {
      throw CertError(std::string("stored report is malformed: ") + ex.what());
    }

    bool all_pass = true;
    for (std::size_t i = 0; i < stored.ledger.size(); ++i) {
      const CertRecord& r = stored.ledger[i];
      bool want = r.op == '<'   ? r.value.hi < r.bound
                  : r.op == '>' ? r.value.lo > r.bound
                                : r.pass;
      if (want != r.pass && inconsistency.empty())
        inconsistency = "record " + std::to_string(i) + " (" + r.label +
                        ") pass flag disagrees with its interval";
      all_pass = all_pass && r.pass;
      rep.ledger.push_back(r);
    }
    bool recomputed = stored.error_type.empty() && all_pass;
    if ((stored.verdict == "PASS") != recomputed && inconsistency.empty())
      inconsistency = "stored verdict '" + stored.verdict + "' is not the conjunction of its records";
    if (!stored.map_name.empty() && !stored.map_wellformed && inconsistency.empty())
      inconsistency = "stored map artifact is malformed";
    if (!stored.has_budget_mapping && inconsistency.empty())
      inconsistency = "stored report lacks the budget mapping header";

    CertRecord audit;
    audit.label = "(verify)";
    audit.value = Interval(double(stored.ledger.size()), double(stored.ledger.size()));
    audit.op = '=';
    audit.bound = 0.0;
    audit.pass = inconsistency.empty();
    audit.note = inconsistency.empty()
                     ? "stored report re-checked; verdict " + stored.verdict + " reproduced"
                     : inconsistency;
    rep.ledger.push_back(std::move(audit));
  });
}

}  // namespace harness_detail

// ---------------------------------------------------------------------------
// Entry point shared by the CLI and the tests.
// ---------------------------------------------------------------------------

inline int run_mode(const std::string& config_path, const std::string& out_dir,
                    const std::string& expected_mode, const CliOverrides& ov,
                    std::ostream& err) {
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };
  auto t0 = clock::now();

  RunConfig cfg;
  RunReport rep;
  std::vector<ExportCurve> curves;
  int grid = 256;
  int code = 0;
  try {
    cfg = parse_config_file(config_path);
    std::string mode = config_mode(cfg);
    if (mode != expected_mode)
      throw ConfigError(config_path + ": config mode '" + mode +
                        "' does not match the subcommand '" + expected_mode + "'");
    validate_keys(cfg, mode);
    if (ov.depth > 0 && mode != "build-proper" && mode != "corollary2")
      throw ConfigError("--depth applies only to build-proper and corollary2");
    if (ov.grid > 0 && ov.grid < 8) throw ConfigError("--grid must be >= 8");
    grid = ov.grid > 0 ? ov.grid : config_int_min(cfg, "grid.curve_samples", 8, 256);

    rep.mode = mode;
    rep.config_echo = cfg.entries;
    auto t1 = clock::now();
    using harness_detail::classify_run;
    if (mode == "lemma-step")
      code = harness_detail::drive_lemma_step(cfg, grid, ov, rep, curves);
    else if (mode == "build-proper")
      code = harness_detail::drive_build_proper(cfg, grid, ov, rep, curves);
    else if (mode == "corollary2")
      code = harness_detail::drive_corollary2(cfg, grid, ov, rep, curves);
    else if (mode == "export")
      code = harness_detail::drive_export(cfg, grid, ov, rep, curves);
    else
      code = harness_detail::drive_verify(cfg, grid, ov, rep, curves);
    auto t2 = clock::now();

    std::size_t row = 0;
    for (const ExportCurve& c : curves) {
      rep.curves.push_back(CurveMeta{c.role, c.depth, c.z.size(), row});
      row += c.z.size();
    }

    std::filesystem::create_directories(out_dir);
    std::filesystem::path out(out_dir);
    write_text_file((out / "report.txt").string(), render_report(rep));
    write_text_file((out / "curves.csv").string(), csv_render(curves));
    write_text_file((out / "curves.svg").string(), svg_render(curves));
    auto t3 = clock::now();

    Timings tm;
    tm.add("run", seconds(t1, t2));
    tm.add("write", seconds(t2, t3));
    tm.add("total", seconds(t0, t3));
    write_text_file((out / "timings.txt").string(), tm.render());
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return 4;
  }
  if (!rep.error_type.empty()) err << rep.error_type << ": " << rep.error_what << "\n";
  return code;
}

}  // namespace harmap
