#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lemma.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// Iteration schedule. eta_k = 2^-(k+1) makes every partial sum and tail exact
// in binary floating point, and the full series sums to exactly one half.
// ---------------------------------------------------------------------------

struct Schedule {
  double R0 = 0.0;
  int K = 1;
  double delta = 0.0;  // per-end drift budget

  static double eta(int k) { return std::ldexp(1.0, -(k + 1)); }
  static double eta_tail(int from) { return std::ldexp(1.0, -from); }  // sum over k >= from
  static double eta_partial(int upto) { return 0.5 - eta_tail(upto + 1); }
  double R(int k) const { return R0 + k; }

  void validate() const {
    if (!(R0 > 0.0)) throw GeomError("schedule needs R0 > 0");
    if (K < 1) throw GeomError("schedule needs depth K >= 1");
    if (!(delta > 0.0)) throw GeomError("schedule needs a positive drift budget");
  }
};

inline CertRecord schedule_record(const Schedule& s) {
  double total = Schedule::eta_partial(s.K) + Schedule::eta_tail(s.K + 1);
  return make_record("(sched)", Interval(total, total), '<', 0.5 * (1.0 + 1e-12),
                     "sum of eta_k over all k is exactly 1/2 for eta_k = 2^-(k+1)");
}

// ---------------------------------------------------------------------------
// Disk-like nesting. Circline ends and carved contours share one order:
// nested(a, b) holds when b, read as a closed end neighborhood, lies in the
// interior of a. Every set is the closure of the side containing the end, so
// between unbounded circlines the smaller set is the one with larger radius.
// ---------------------------------------------------------------------------

using DiskLike = std::variant<Circline, CurveDisk>;

namespace builder_detail {

inline double contour_min_radius(const ParamCurve& c, cplx center) {
  double best = HUGE_VAL;
  for (const Pt& v : c.v) best = std::min(best, std::abs(v.value() - center));
  return best;
}

inline double contour_max_radius(const ParamCurve& c, cplx center) {
  double best = 0.0;
  for (const Pt& v : c.v) best = std::max(best, std::abs(v.value() - center));
  return best;
}

inline bool contour_encloses(const ParamCurve& c, cplx z) {
  return winding_number(c, z) != 0;
}

}  // namespace builder_detail

inline bool disklike_nested(const DiskLike& a, const DiskLike& b) {
  using builder_detail::contour_encloses;
  using builder_detail::contour_max_radius;
  using builder_detail::contour_min_radius;
  if (std::holds_alternative<Circline>(a) && std::holds_alternative<Circline>(b))
    return disk_nested(std::get<Circline>(a), std::get<Circline>(b));
  if (std::holds_alternative<Circline>(a)) {
    const Circline& ca = std::get<Circline>(a);
    const CurveDisk& cb = std::get<CurveDisk>(b);
    if (ca.bounded || cb.bounded) return false;
    return contour_encloses(cb.boundary, ca.center) &&
           contour_min_radius(cb.boundary, ca.center) > ca.radius;
  }
  const CurveDisk& ca = std::get<CurveDisk>(a);
  if (ca.bounded) return false;
  if (std::holds_alternative<Circline>(b)) {
    const Circline& cb = std::get<Circline>(b);
    if (!cb.bounded)
      return contour_encloses(ca.boundary, cb.center) &&
             contour_max_radius(ca.boundary, cb.center) < cb.radius;
    return !contour_encloses(ca.boundary, cb.center) &&
           curve_dist(ca.boundary, cb.center) > cb.radius;
  }
  const CurveDisk& cb = std::get<CurveDisk>(b);
  if (cb.bounded) return false;
  for (const Pt& v : ca.boundary.v)
    if (!contour_encloses(cb.boundary, v.value())) return false;
  for (const Pt& v : cb.boundary.v)
    if (contour_encloses(ca.boundary, v.value())) return false;
  return lemma_detail::curve_curve_dist(ca.boundary, cb.boundary) > 0.0;
}

// ---------------------------------------------------------------------------
// Run initialisation: translate the seed away from the origin if needed, fix
// the per-end charts, and certify the starting bounds r0 < |F0| < R0.
// ---------------------------------------------------------------------------

struct EndSpec {
  Circline outer;  // shallow end neighborhood, the approximation boundary
  Circline inner;  // deep end neighborhood, edge of the seed's domain
};

struct InitEnd {
  EndSpec spec;
  Moebius chart;  // z -> w with the end at infinity and circles concentric
  bool chart_identity = true;
  Circline w_outer, w_inner;
  HarmonicPlaneMap F0;  // chart-side seed, shifted and scaled by 1/n
  double r0 = 0.0, R0 = 0.0;
  ImplicitRegion protected_w;  // other ends' deep disks in this chart
  bool has_protected = false;
};

struct InitRun {
  Vec2 shift{0.0, 0.0};
  double delta0 = 0.0, delta = 0.0;
  std::vector<InitEnd> ends;
  std::vector<CertRecord> records;
};

namespace builder_detail {

inline bool moebius_is_identity(const Moebius& t) {
  return t.a == cplx(1.0) && t.b == cplx(0.0) && t.c == cplx(0.0) && t.d == cplx(1.0);
}

inline void require_concentric(const Circline& a, const Circline& b, const char* what) {
  double scale = std::max({1.0, a.radius, b.radius});
  if (std::abs(a.center - b.center) > 1e-9 * scale)
    throw GeomError(std::string(what) + " requires concentric end circles");
}

inline bool circlines_disjoint(const Circline& a, const Circline& b) {
  if (a.bounded && b.bounded) return std::abs(a.center - b.center) > a.radius + b.radius;
  if (!a.bounded && !b.bounded) return false;  // both contain a neighborhood of infinity
  const Circline& bd = a.bounded ? a : b;
  const Circline& ub = a.bounded ? b : a;
  return std::abs(bd.center - ub.center) + bd.radius < ub.radius;
}

// Chart sending the end to infinity: identity for unbounded pairs, the
// inversion w = 2 rho_inner / (z - c) for bounded pairs.
inline Moebius end_chart(const EndSpec& e) {
  if (!e.inner.bounded && !e.outer.bounded) return Moebius::identity();
  if (e.inner.bounded && e.outer.bounded) {
    double q = 2.0 * e.inner.radius;
    return Moebius{cplx(0.0), cplx(q), cplx(1.0), -e.inner.center};
  }
  throw GeomError("end pair must be both bounded or both unbounded");
}

inline std::vector<CoverCell> end_ring_cells(cplx center, double s_lo, double s_hi) {
  return lemma_detail::polar_patch_cells(center, s_lo, s_hi, 0.0, 2.0 * kPi, 8, 1024);
}

// Plain min/max of |m| over an inclusive polar grid on the ring. Used only
// to pick thresholds; every bound that matters is certified afterwards.
inline Interval sampled_ring_range(const HarmonicPlaneMap& m, cplx center, double s_lo,
                                   double s_hi) {
  double mn = HUGE_VAL, mx = 0.0;
  for (int ir = 0; ir <= 32; ++ir) {
    double s = s_lo + (s_hi - s_lo) * ir / 32.0;
    for (int ia = 0; ia < 1024; ++ia) {
      double th = 2.0 * kPi * ia / 1024.0;
      double v = hp_norm_raw(m, Pt(center, std::polar(s, th)));
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
  }
  return Interval(mn, mx);
}

inline HarmonicPlaneMap map_scale(const HarmonicPlaneMap& m, double s) {
  HarmonicPlaneMap out = m;
  for (MapTerm& t : out.terms) t.dir = t.dir * s;
  return out;
}

inline std::string step_tag(int end, int k) {
  std::ostringstream os;
  os << "end " << end << " depth " << k << ": ";
  return os.str();
}

}  // namespace builder_detail

inline InitRun init_run(const HarmonicPlaneMap& F, const std::vector<EndSpec>& ends,
                        double delta0) {
  using namespace builder_detail;
  if (ends.empty()) throw GeomError("init_run needs at least one end");
  if (!(delta0 > 0.0)) throw GeomError("init_run needs a positive drift budget");
  InitRun run;
  run.delta0 = delta0;
  run.delta = delta0 / double(ends.size());

  for (const EndSpec& e : ends) {
    if (!disk_nested(e.outer, e.inner))
      throw GeomError("end ring is degenerate: deep disk must sit inside the shallow one");
    require_concentric(e.outer, e.inner, "init_run");
  }
  for (std::size_t i = 0; i < ends.size(); ++i)
    for (std::size_t j = i + 1; j < ends.size(); ++j)
      if (!circlines_disjoint(ends[i].outer, ends[j].outer))
        throw GeomError("end neighborhoods overlap");

  // Charts and chart-side seeds first; |F| values are chart independent.
  std::vector<InitEnd> pre;
  for (const EndSpec& e : ends) {
    InitEnd ie;
    ie.spec = e;
    ie.chart = end_chart(e);
    ie.chart_identity = moebius_is_identity(ie.chart);
    ie.w_inner = ie.chart_identity ? e.inner : image_circline(ie.chart, e.inner);
    ie.w_outer = ie.chart_identity ? e.outer : image_circline(ie.chart, e.outer);
    require_concentric(ie.w_outer, ie.w_inner, "init_run chart");
    if (!(ie.w_inner.radius > ie.w_outer.radius * (1.0 + 1e-9)))
      throw GeomError("end ring is degenerate after the chart");
    ie.F0 = ie.chart_identity ? F : hp_compose_moebius(F, ie.chart.inverse());
    for (const Pt& pole : hp_poles(ie.F0)) {
      double t = std::abs(pole.value() - ie.w_inner.center);
      if (t >= ie.w_outer.radius * (1.0 - 1e-9) && t <= ie.w_inner.radius * (1.0 + 1e-9))
        throw GeomError("seed map has a pole on an end ring");
    }
    pre.push_back(std::move(ie));
  }

  // Certified origin clearance over the union of end rings decides the
  // translation; the shift magnitude rests on a certified upper bound.
  CertOptions copt;
  copt.max_cells = 200000;
  bool clear_of_origin = true;
  double sup_all = 0.0, samp_lo = HUGE_VAL;
  for (const InitEnd& ie : pre) {
    cplx c = ie.w_inner.center;
    auto cells = end_ring_cells(c, ie.w_outer.radius, ie.w_inner.radius);
    auto enclose = [&ie](const CoverCell& cell) { return hp_enclose_norm(ie.F0, cell); };
    CertOutcome clr = certify_inf_above(enclose, SampleFn{}, cells, 0.1, copt);
    if (!clr.proven) clear_of_origin = false;
    Interval samp = sampled_ring_range(ie.F0, c, ie.w_outer.radius, ie.w_inner.radius);
    samp_lo = std::min(samp_lo, samp.lo);
    double cap = 1.05 * samp.hi + 0.05;
    CertOutcome sup;
    for (int t = 0; t < 40 && !sup.proven; ++t) {
      sup = certify_sup_below(enclose, SampleFn{}, cells, cap, copt);
      if (!sup.proven) cap *= 2.0;
    }
    if (!sup.proven) throw CertError("seed magnitude on an end ring has no certified cap");
    sup_all = std::max(sup_all, cap);
  }

  double shift_mag = clear_of_origin ? 0.0 : std::max(2.0 * sup_all, 0.2);
  run.shift = Vec2{shift_mag, 0.0};
  {
    std::ostringstream os;
    os << "sampled origin clearance " << samp_lo << " with certified ring cap " << sup_all
       << "; " << (shift_mag > 0.0 ? "translation applied" : "no translation");
    run.records.push_back(
        make_record("(shift)", Interval(shift_mag, shift_mag), '=', shift_mag, os.str()));
  }

  double inv_n = 1.0 / double(ends.size());
  for (InitEnd& ie : pre) {
    if (shift_mag > 0.0)
      ie.F0.terms.push_back(MapTerm{rf_constant(cplx(shift_mag, 0.0)), Vec2{1.0, 0.0}});
    ie.F0 = map_scale(ie.F0, inv_n);

    cplx c = ie.w_inner.center;
    Interval samp = sampled_ring_range(ie.F0, c, ie.w_outer.radius, ie.w_inner.radius);
    if (!(samp.lo > 0.0))
      throw CertError("scaled seed magnitude vanishes somewhere on an end ring");
    ie.r0 = 0.9 * samp.lo;
    ie.R0 = 1.1 * samp.hi;

    auto cells = end_ring_cells(c, ie.w_outer.radius, ie.w_inner.radius);
    auto enclose = [&ie](const CoverCell& cell) { return hp_enclose_norm(ie.F0, cell); };
    CertOutcome lov = certify_inf_above(enclose, SampleFn{}, cells, ie.r0, copt);
    CertOutcome hiv = certify_sup_below(enclose, SampleFn{}, cells, ie.R0, copt);
    if (!lov.proven || !hiv.proven)
      throw CertError("post-selection bounds r0 < |F0| < R0 failed to certify");
    run.records.push_back(make_record("(r0)", Interval(samp.lo, HUGE_VAL), '>', ie.r0,
                                      "certified inf of the scaled seed on the end ring"));
    run.records.push_back(make_record("(R0)", Interval(0.0, samp.hi), '<', ie.R0,
                                      "certified sup of the scaled seed on the end ring"));
  }

  // Deep disks of the other ends, pushed through each chart, form the
  // protected exterior the lemma keeps poles away from.
  for (std::size_t i = 0; i < pre.size(); ++i) {
    bool first = true;
    for (std::size_t j = 0; j < pre.size(); ++j) {
      if (i == j) continue;
      Circline img = pre[i].chart_identity ? ends[j].inner
                                           : image_circline(pre[i].chart, ends[j].inner);
      ImplicitRegion reg = region_from_circline(img);
      pre[i].protected_w = first ? reg : region_union(pre[i].protected_w, reg);
      first = false;
    }
    pre[i].has_protected = !first;
  }

  run.ends = std::move(pre);
  return run;
}

// ---------------------------------------------------------------------------
// Per-step certification helpers shared by the iteration and its tests.
// ---------------------------------------------------------------------------

namespace builder_detail {

inline CertOutcome sup_on_disk(const HarmonicPlaneMap& m, cplx center, double rho,
                               double threshold, const ImplicitRegion* minus = nullptr,
                               std::size_t max_cells = 200000) {
  ImplicitRegion reg = disk_region(center, rho);
  if (minus) reg = region_intersect(reg, region_complement(*minus));
  auto cover = cover_region(reg, 1e-3 * rho);
  CertOptions copt;
  copt.max_cells = max_cells;
  return certify_sup_below([&m](const CoverCell& c) { return hp_enclose_norm(m, c); },
                           SampleFn{}, cover, threshold, copt);
}

struct BandOutcome {
  CertOutcome lo, hi;
  bool pass() const { return lo.proven && hi.proven; }
};

inline BandOutcome band_on_annulus(const HarmonicPlaneMap& m, cplx center, double s_lo,
                                   double s_hi, double band_lo, double band_hi,
                                   std::size_t max_cells = 200000) {
  auto cells = lemma_detail::polar_patch_cells(center, s_lo, s_hi, 0.0, 2.0 * kPi, 4, 512);
  auto enclose = [&m](const CoverCell& c) { return hp_enclose_norm(m, c); };
  CertOptions copt;
  copt.max_cells = max_cells;
  BandOutcome out;
  out.lo = certify_inf_above(enclose, SampleFn{}, cells, band_lo, copt);
  out.hi = certify_sup_below(enclose, SampleFn{}, cells, band_hi, copt);
  return out;
}

inline CertOutcome inf_on_annulus(const HarmonicPlaneMap& m, cplx center, double s_lo,
                                  double s_hi, double threshold,
                                  std::size_t max_cells = 200000) {
  auto cells = lemma_detail::polar_patch_cells(center, s_lo, s_hi, 0.0, 2.0 * kPi, 4, 512);
  CertOptions copt;
  copt.max_cells = max_cells;
  return certify_inf_above([&m](const CoverCell& c) { return hp_enclose_norm(m, c); },
                           SampleFn{}, cells, threshold, copt);
}

}  // namespace builder_detail

// Level-band search for the next shallow disk: widen the trial annulus away
// from the carved boundary until the band stops certifying, then back off.
inline double find_d2_radius(const HarmonicPlaneMap& m, cplx center, double lo, double hi,
                             double band_lo, double band_hi) {
  double gap = hi - lo;
  if (!(gap > 0.0)) throw GeomError("level-band search needs an open radius window");
  auto pass = [&](double s) {
    return builder_detail::band_on_annulus(m, center, hi - s * gap, hi, band_lo, band_hi)
        .pass();
  };
  double s = lemma_detail::shrink_to_cert(pass, 0.9, "level band");
  return hi - s * gap;
}

// ---------------------------------------------------------------------------
// One iteration step's bookkeeping after the lemma call. Factored out so the
// record logic can be exercised on synthetic data.
// ---------------------------------------------------------------------------

struct StepInputs {
  HarmonicPlaneMap Fk, Fk1;
  DiskLike D1_prev;
  CurveDisk D1_next;
  Circline D1_next_circle;  // concentric circline inscribed in the carved disk
  Circline D2_prev;
  double delta = 0.0, eta_k = 0.0, eta_k1 = 0.0, R_next = 0.0;
  bool first = false;
  const ImplicitRegion* ambient_minus = nullptr;
};

struct StepResult {
  Circline D2_next;
  double ring_inf = 0.0;   // certified inf of |F_{k+1}| on the new collar annulus
  double drift_sup = 0.0;  // certified sup of the step difference
};

inline StepResult certify_step(const StepInputs& si, std::vector<CertRecord>& rec) {
  using namespace builder_detail;
  cplx c = si.D2_prev.center;

  if (si.Fk1.terms.size() <= si.Fk.terms.size())
    throw GeomError("step map must extend the previous term list");
  HarmonicPlaneMap diff;
  diff.terms.assign(si.Fk1.terms.begin() + std::ptrdiff_t(si.Fk.terms.size()),
                    si.Fk1.terms.end());

  double p2_bound = si.delta * si.eta_k1;
  CertOutcome p2 = sup_on_disk(diff, c, si.D2_prev.radius, p2_bound * (1.0 - 1e-12),
                               si.ambient_minus);
  if (!p2.proven) {
    std::ostringstream os;
    os << "step drift bound " << p2_bound << " failed on the shallow side";
    throw CertError(os.str());
  }

  double lo = si.D2_prev.radius * (1.0 + 1e-9);
  double hi = si.D1_next_circle.radius * (1.0 - 1e-9);
  double band_lo = si.R_next - si.eta_k1;
  double rho2 = find_d2_radius(si.Fk1, c, lo, hi, band_lo, si.R_next);
  Circline d2n{c, rho2, false};
  BandOutcome band = band_on_annulus(si.Fk1, c, rho2, hi, band_lo, si.R_next);
  if (!band.pass()) throw CertError("level band failed to re-certify on the chosen annulus");

  CertOutcome p4;
  double p4_bound = (si.R_next - 1.0) - si.eta_k - si.eta_k1;
  if (!si.first) {
    p4 = inf_on_annulus(si.Fk1, c, si.D2_prev.radius, hi, p4_bound);
    if (!p4.proven) throw CertError("previous-band floor failed on the step annulus");
  }

  bool chain = disklike_nested(si.D2_prev, d2n) && disklike_nested(d2n, si.D1_next) &&
               disklike_nested(si.D1_next, si.D1_prev);
  {
    CertRecord r;
    r.label = "(p1)";
    r.value = Interval(rho2, si.D1_next_circle.radius);
    r.op = '=';
    r.bound = 0.0;
    r.pass = chain;
    r.note = "nesting chain D2 < new D2 < carved D1 < old D1; each removed region is an "
             "annulus ring of the previous one";
    rec.push_back(r);
  }
  rec.push_back(make_record("(p2)", Interval(0.0, p2.certified), '<', p2_bound,
                            "certified sup of the step difference on the shallow side"));
  {
    CertRecord r;
    r.label = "(p3)";
    r.value = Interval(band.lo.certified, band.hi.certified);
    r.op = '=';
    r.bound = si.R_next;
    r.pass = band.pass();
    r.note = "R_{k+1} - eta_{k+1} < |F_{k+1}| < R_{k+1} on the new collar annulus; the "
             "carved sliver beyond it is covered by the lemma's band record";
    rec.push_back(r);
  }
  if (!si.first)
    rec.push_back(make_record("(p4)", Interval(p4.certified, HUGE_VAL), '>', p4_bound,
                              "floor for |F_{k+1}| across the previous shallow annulus"));
  if (!chain) throw GeomError("iteration nesting chain broke");

  StepResult out;
  out.D2_next = d2n;
  out.ring_inf = band.lo.certified;
  out.drift_sup = p2.certified;
  return out;
}

// ---------------------------------------------------------------------------
// Per-end iteration driver.
// ---------------------------------------------------------------------------

struct EndIteration {
  int index = 0;
  Moebius chart;
  bool chart_identity = true;
  cplx center{0.0, 0.0};
  double r0 = 0.0, R0 = 0.0, delta = 0.0;
  int depth = 0;
  HarmonicPlaneMap F0;  // chart side
  std::vector<std::vector<MapTerm>> step_terms;
  std::vector<Circline> D1_circle;   // concentric bound per depth; entry 0 is the input
  std::vector<CurveDisk> D1_carved;  // carved disks, one per completed step
  std::vector<Circline> D2;
  std::vector<double> ring_inf;
  double drift_sum = 0.0;
  std::vector<CertRecord> records;

  HarmonicPlaneMap map_at(int k) const {
    HarmonicPlaneMap m = F0;
    for (int i = 0; i < k && i < int(step_terms.size()); ++i)
      m.terms.insert(m.terms.end(), step_terms[i].begin(), step_terms[i].end());
    return m;
  }
};

inline EndIteration iterate_end(const InitRun& init, int index, const Schedule& sched,
                                const LemmaOptions& lopt = {}) {
  using namespace builder_detail;
  sched.validate();
  if (index < 0 || index >= int(init.ends.size()))
    throw GeomError("iterate_end: end index out of range");
  const InitEnd& e = init.ends[std::size_t(index)];

  EndIteration it;
  it.index = index;
  it.chart = e.chart;
  it.chart_identity = e.chart_identity;
  it.center = e.w_inner.center;
  it.r0 = e.r0;
  it.R0 = e.R0;
  it.delta = sched.delta;
  it.F0 = e.F0;
  it.D1_circle.push_back(e.w_inner);
  it.D2.push_back(e.w_outer);
  it.records.push_back(schedule_record(sched));

  for (int k = 0; k < sched.K; ++k) {
    LemmaInput lin;
    lin.F = it.map_at(k);
    lin.D1 = it.D1_circle[std::size_t(k)];
    lin.D2 = it.D2[std::size_t(k)];
    lin.r = k == 0 ? it.r0 : sched.R(k) - Schedule::eta(k);
    lin.R = sched.R(k + 1);
    lin.eps1 = sched.delta * Schedule::eta(k + 1);
    lin.eps2 = Schedule::eta(k + 1);
    lin.eps3 = Schedule::eta(k + 1);
    lin.protected_exterior = e.protected_w;
    lin.has_protected = e.has_protected;

    LemmaRun run;
    try {
      run = run_lemma(lin, lopt);
    } catch (const FeasibilityError& ex) {
      throw FeasibilityError(step_tag(index, k) + ex.what());
    } catch (const CertError& ex) {
      throw CertError(step_tag(index, k) + ex.what());
    } catch (const GeomError& ex) {
      throw GeomError(step_tag(index, k) + ex.what());
    }
    std::ostringstream depth_note;
    depth_note << "depth " << k << "; ";
    for (CertRecord& r : run.records) {
      r.note = depth_note.str() + r.note;
      it.records.push_back(std::move(r));
    }

    Circline inscribed{it.center,
                       0.999 * contour_min_radius(run.output.D.boundary, it.center), false};
    StepInputs si;
    si.Fk = lin.F;
    si.Fk1 = run.output.G;
    si.D1_prev = k == 0 ? DiskLike(it.D1_circle[0]) : DiskLike(it.D1_carved.back());
    si.D1_next = run.output.D;
    si.D1_next_circle = inscribed;
    si.D2_prev = it.D2[std::size_t(k)];
    si.delta = sched.delta;
    si.eta_k = k == 0 ? 0.0 : Schedule::eta(k);
    si.eta_k1 = Schedule::eta(k + 1);
    si.R_next = sched.R(k + 1);
    si.first = k == 0;
    si.ambient_minus = e.has_protected ? &e.protected_w : nullptr;
    StepResult sr;
    try {
      sr = certify_step(si, it.records);
    } catch (const CertError& ex) {
      throw CertError(step_tag(index, k) + ex.what());
    } catch (const GeomError& ex) {
      throw GeomError(step_tag(index, k) + ex.what());
    }

    it.step_terms.push_back(std::vector<MapTerm>(
        run.output.G.terms.begin() + std::ptrdiff_t(lin.F.terms.size()),
        run.output.G.terms.end()));
    it.D1_carved.push_back(run.output.D);
    it.D1_circle.push_back(inscribed);
    it.D2.push_back(sr.D2_next);
    it.ring_inf.push_back(sr.ring_inf);
    it.drift_sum += sr.drift_sup;
    ++it.depth;
  }
  return it;
}

// ---------------------------------------------------------------------------
// Composition across ends and the run-level certificates.
// ---------------------------------------------------------------------------

struct ProperRun {
  int K = 0;
  double delta0 = 0.0;
  Vec2 shift{0.0, 0.0};
  std::vector<EndIteration> ends;
  std::vector<cplx> punctures;
  std::vector<HarmonicPlaneMap> parts;  // plane-side maps, ends first, punctures after
  HarmonicPlaneMap phi;                 // concatenation of all parts
  std::vector<CertRecord> records;
};

// Evaluation is defined per part so that the composed value is exactly the
// sum of the parts' values.
inline Vec2 proper_eval(const ProperRun& run, const Pt& z) {
  Vec2 acc{0.0, 0.0};
  for (const HarmonicPlaneMap& p : run.parts) acc = acc + hp_eval_raw(p, z);
  return acc;
}

namespace builder_detail {

// Plane-side radius of a chart-side circle around the end.
inline double pullback_radius(const EndIteration& it, double w_radius) {
  if (it.chart_identity) return w_radius;
  return std::abs(it.chart.b) / w_radius;
}

inline cplx end_plane_center(const EndIteration& it) {
  return it.chart_identity ? it.center : it.chart.inverse().apply_infinity();
}

inline void properness_records(ProperRun& run) {
  for (const EndIteration& it : run.ends) {
    for (int m = 0; m < it.depth; ++m) {
      double a = pullback_radius(it, it.D2[std::size_t(m)].radius);
      double b = pullback_radius(it, it.D2[std::size_t(m) + 1].radius);
      double bound = double(m) + (it.R0 - run.delta0 - 1.0);
      CertOutcome inf = inf_on_annulus(run.phi, end_plane_center(it), std::min(a, b),
                                       std::max(a, b), bound);
      std::ostringstream os;
      os << "end " << it.index << ", depth band m = " << m
         << ": |phi| floor on the collar between consecutive shallow disks";
      CertRecord r =
          make_record("(prop)", Interval(inf.certified, HUGE_VAL), '>', bound, os.str());
      r.pass = inf.proven;
      run.records.push_back(r);
    }
    for (std::size_t k = 0; k < it.ring_inf.size(); ++k) {
      double floor = it.R0 + double(k + 1) - Schedule::eta(int(k) + 1);
      if (k > 0) floor = std::max(floor, it.ring_inf[k - 1]);
      run.records.push_back(
          make_record("(grow)", Interval(it.ring_inf[k], it.ring_inf[k]), '>', floor,
                      "certified ring infimum grows strictly and clears R0 + k - eta_k"));
    }
    if (it.depth > 0) {
      double cap = it.delta * Schedule::eta_partial(it.depth);
      run.records.push_back(make_record("(tail)", Interval(0.0, it.drift_sum), '<',
                                        cap * (1.0 + 1e-12),
                                        "summed certified step drifts stay within the "
                                        "schedule's partial sum, hence below delta"));
    }
  }
}

}  // namespace builder_detail

inline ProperRun compose_ends(const std::vector<EndIteration>& ends, double delta0,
                              Vec2 shift = Vec2{0.0, 0.0}) {
  using namespace builder_detail;
  if (ends.empty()) throw GeomError("compose_ends needs at least one end");
  for (const EndIteration& it : ends)
    if (it.depth != ends.front().depth)
      throw GeomError("compose_ends: ends were iterated to different depths");

  ProperRun run;
  run.K = ends.front().depth;
  run.delta0 = delta0;
  run.shift = shift;
  run.ends = ends;
  for (const EndIteration& it : ends) {
    HarmonicPlaneMap w_map = it.map_at(it.depth);
    run.parts.push_back(it.chart_identity ? w_map : hp_compose_moebius(w_map, it.chart));
  }
  for (const HarmonicPlaneMap& p : run.parts)
    run.phi.terms.insert(run.phi.terms.end(), p.terms.begin(), p.terms.end());
  properness_records(run);
  return run;
}

inline CertRecord density_certificate(const HarmonicPlaneMap& F, const ProperRun& run,
                                      const ImplicitRegion& compact, double delta0) {
  using namespace builder_detail;
  auto cover = cover_region(compact, 1e-3 * std::max(1.0, compact.bx.width()));

  for (const EndIteration& it : run.ends) {
    cplx c = end_plane_center(it);
    double s = pullback_radius(it, it.D2.back().radius);
    for (const CoverCell& cell : cover) {
      CBox zb = cell_zbox(cell);
      cplx mid(zb.re.mid(), zb.im.mid());
      double rad = std::hypot(zb.re.width(), zb.im.width()) * 0.5;
      double t = std::abs(mid - c);
      bool clear = it.chart_identity ? (t + rad < s) : (t - rad > s);
      if (!clear) throw GeomError("density compact leaves the truncated domain");
    }
  }

  HarmonicPlaneMap diff = run.phi;
  for (const MapTerm& t : F.terms) diff.terms.push_back(MapTerm{t.f, -t.dir});
  if (run.shift.norm() > 0.0)
    diff.terms.push_back(
        MapTerm{rf_constant(cplx(run.shift.x, run.shift.y)), Vec2{-1.0, 0.0}});

  CertOptions copt;
  copt.max_cells = 400000;
  MinResult sup =
      certified_max([&diff](const CoverCell& c) { return hp_enclose_norm(diff, c); },
                    SampleFn{}, cover, 0.02 * delta0, copt);
  double tail =
      run.ends.empty() ? 0.0
                       : run.delta0 / double(run.ends.size()) *
                             Schedule::eta_tail(run.K + 1) * double(run.ends.size());
  std::ostringstream os;
  os << "certified sup |phi - F| plus the unresolved schedule tail, "
     << Schedule::eta_tail(run.K + 1) << " of each end's drift budget";
  return make_record("(dens)", Interval(sup.bounds.lo, sup.bounds.hi + tail), '<', delta0,
                     os.str());
}

// ---------------------------------------------------------------------------
// Corollary-2 construction: circle ends run the single-end pipeline in their
// own charts; punctures contribute simple poles directly.
// ---------------------------------------------------------------------------

struct Corollary2Domain {
  std::vector<Circline> circles;  // bounded, pairwise disjoint
  std::vector<cplx> punctures;
};

namespace builder_detail {

inline void validate_corollary2(const Corollary2Domain& dom) {
  for (const Circline& c : dom.circles)
    if (!c.bounded || !(c.radius > 0.0))
      throw GeomError("corollary2 circles must be bounded with positive radius");
  if (dom.circles.empty() && dom.punctures.empty())
    throw GeomError("corollary2 needs at least one end");
  for (std::size_t i = 0; i < dom.circles.size(); ++i)
    for (std::size_t j = i + 1; j < dom.circles.size(); ++j) {
      double need = (4.0 / 3.0) * (dom.circles[i].radius + dom.circles[j].radius);
      if (!(std::abs(dom.circles[i].center - dom.circles[j].center) > need))
        throw GeomError("corollary2 circle ends overlap once inflated to their work rings");
    }
  for (const cplx& p : dom.punctures)
    for (const Circline& c : dom.circles)
      if (!(std::abs(p - c.center) > (4.0 / 3.0) * c.radius + 0.1))
        throw GeomError("corollary2 puncture sits inside a circle end's work ring");
  for (std::size_t i = 0; i < dom.punctures.size(); ++i)
    for (std::size_t j = i + 1; j < dom.punctures.size(); ++j)
      if (!(std::abs(dom.punctures[i] - dom.punctures[j]) > 0.1))
        throw GeomError("corollary2 punctures are too close to separate their probe circles");
}

}  // namespace builder_detail

inline ProperRun corollary2_build(const Corollary2Domain& dom, int K, double delta0,
                                  const LemmaOptions& lopt = {}) {
  using namespace builder_detail;
  validate_corollary2(dom);
  if (K < 1) throw GeomError("corollary2 needs depth K >= 1");
  if (!(delta0 > 0.0)) throw GeomError("corollary2 needs a positive drift budget");
  double n = double(dom.circles.size() + dom.punctures.size());

  std::vector<EndIteration> circle_runs;
  for (std::size_t j = 0; j < dom.circles.size(); ++j) {
    const Circline& cj = dom.circles[j];
    EndSpec spec;
    spec.inner = Circline{cj.center, cj.radius, true};
    spec.outer = Circline{cj.center, (4.0 / 3.0) * cj.radius, true};
    // Seed with the chart map itself: its pole sits inside the removed disk
    // and the chart-side seed composes to the coordinate w.
    HarmonicPlaneMap seed =
        map_from_rational(rf_simple_pole(Pt(cj.center), cplx(2.0 * cj.radius)));
    std::string tag = "corollary2 circle " + std::to_string(j) + ": ";
    try {
      InitRun init = init_run(seed, {spec}, delta0 / n);
      Schedule sched;
      sched.R0 = init.ends[0].R0;
      sched.K = K;
      sched.delta = delta0 / n;
      EndIteration one = iterate_end(init, 0, sched, lopt);
      one.index = int(j);
      one.records.insert(one.records.begin(), init.records.begin(), init.records.end());
      circle_runs.push_back(std::move(one));
    } catch (const FeasibilityError& ex) {
      throw FeasibilityError(tag + ex.what());
    } catch (const CertError& ex) {
      throw CertError(tag + ex.what());
    } catch (const GeomError& ex) {
      throw GeomError(tag + ex.what());
    }
  }

  ProperRun run;
  run.K = K;
  run.delta0 = delta0;
  run.ends = std::move(circle_runs);
  run.punctures = dom.punctures;
  for (const EndIteration& it : run.ends) {
    HarmonicPlaneMap w_map = it.map_at(it.depth);
    run.parts.push_back(it.chart_identity ? w_map : hp_compose_moebius(w_map, it.chart));
  }
  for (const cplx& p : dom.punctures)
    run.parts.push_back(map_from_rational(rf_simple_pole(Pt(p), cplx(1.0))));
  for (const HarmonicPlaneMap& p : run.parts)
    run.phi.terms.insert(run.phi.terms.end(), p.terms.begin(), p.terms.end());

  properness_records(run);

  CertOptions copt;
  copt.max_cells = 100000;
  for (std::size_t j = 0; j < dom.punctures.size(); ++j) {
    const cplx p = dom.punctures[j];
    const double probes[2] = {1e-2, 1e-3};
    double inf_val[2] = {0.0, 0.0};
    for (int i = 0; i < 2; ++i) {
      auto cells = cover_arc(Pt(p), probes[i], 0.0, 2.0 * kPi, 256);
      MinResult inf = certified_min(
          [&run](const CoverCell& c) { return hp_enclose_norm(run.phi, c); },
          [&run](const Pt& z) { return hp_norm_raw(run.phi, z); }, cells, 1e-3 / probes[i],
          copt);
      inf_val[i] = inf.bounds.lo;
      std::ostringstream os;
      os << "puncture " << j << ": certified inf |phi| on the circle of radius " << probes[i];
      run.records.push_back(
          make_record("(punct)", inf.bounds, '>', 0.5 / probes[i], os.str()));
    }
    run.records.push_back(
        make_record("(growth)", Interval(inf_val[1] / inf_val[0], inf_val[1] / inf_val[0]),
                    '>', 5.0,
                    "puncture " + std::to_string(j) +
                        ": inf growth when the probe radius drops tenfold"));
  }
  return run;
}

}  // namespace harmap
