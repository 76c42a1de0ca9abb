#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "certify.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "harmonic.hpp"
#include "numeric.hpp"
#include "rational.hpp"
#include "runge.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// One full run of the deformation construction: from (F, D1, D2, r, R,
// eps1..eps3) to a disk D and a harmonic map G with every intermediate
// inequality certified. Records carry the inequality labels used by the
// reports; a run either completes or aborts with the label that failed.
// ---------------------------------------------------------------------------

struct CertRecord {
  std::string label;
  Interval value{0.0, 0.0};
  char op = '<';  // '<' value.hi < bound, '>' value.lo > bound, '=' structural
  double bound = 0.0;
  bool pass = false;
  std::string note;
};

inline CertRecord make_record(std::string label, Interval value, char op, double bound,
                              std::string note = "") {
  CertRecord r;
  r.label = std::move(label);
  r.value = value;
  r.op = op;
  r.bound = bound;
  r.pass = op == '<' ? value.hi < bound : op == '>' ? value.lo > bound : true;
  r.note = std::move(note);
  return r;
}

// Closed-curve region on the sphere; bounded=false is the side containing
// infinity, mirroring the circline convention.
struct CurveDisk {
  ParamCurve boundary;
  bool bounded = false;
};

struct LemmaBudgets {
  double max_certified_ops = 2e9;
  std::size_t max_poles = 20000;
  std::size_t max_push_steps = 200000;
};

struct LemmaOptions {
  double epsilon0_override = 0.0;  // testing hook; 0 means select_epsilon0
  int max_retries = 4;
  LemmaBudgets budgets;
};

struct LemmaInput {
  HarmonicPlaneMap F;
  Circline D1, D2;  // unbounded end neighborhoods, D1 inside int D2 as sets
  double r = 0.0, R = 0.0;
  double eps1 = 0.0, eps2 = 0.0, eps3 = 0.0;
  ImplicitRegion protected_exterior;  // optional extra region where F's poles stay clear
  bool has_protected = false;
};

struct LemmaScaffold {
  double eps0 = 0.0;
  cplx center{0.0, 0.0};
  Circline D3, D4;  // D5 is D4 with the pockets attached; kept implicit
  int n = 0;
  std::vector<cplx> p;         // markers on the D4 circle
  std::vector<cplx> b_center;  // disk B_j centers at the arc midpoints
  double b_radius = 0.0;
  std::vector<Frame> S;
  double delta = 0.0;
  std::vector<double> theta;  // inward ray angle at each marker
  std::vector<Pt> q;          // ray bases on the pocket boundaries
  std::vector<RationalFunction> zeta;  // unit-residue simple poles at p_j
  double kappa = 0.0;
  double sup_zeta = 0.0;  // certified sup |zeta_j| over K_j (common to all j)
  double rho_a = 0.0;     // |a_j - p_j|
  std::vector<double> t;
  std::vector<Pt> a;
  // carve results
  std::vector<double> phi;  // mouth arc half-widths
  std::vector<double> w;    // strip half-widths (never exceeding phi)
  std::vector<double> nu;   // mouth neighborhood radii
  std::vector<ParamCurve> C;  // mouth arcs, pieces of the carved boundary
  std::vector<ParamCurve> Q;  // boundary pieces between consecutive mouths
  ParamCurve dD6;             // full carved boundary walk
  Region K;                   // the carved compact: bitten disk with fingers
  ImplicitRegion sigma_d6;    // membership/clearance for K
  double m7 = 0.0;
  ImplicitRegion D7;  // pole home: points at distance >= m7 from K
  double L0 = 0.0;
};

struct DeformationLedger {
  HarmonicPlaneMap h0;
  std::vector<MapTerm> h_step;
  std::vector<Vec2> h_at_a_stage;  // h_j(a_j)
  std::vector<Vec2> h_at_a;        // h_n(a_j)
  std::vector<Frame> sbar;
  std::vector<double> tau;
  std::vector<MapTerm> g_step;
  std::vector<double> c1_sup, c2_sup;

  HarmonicPlaneMap h(std::size_t j) const {
    HarmonicPlaneMap m = h0;
    for (std::size_t i = 0; i < j && i < h_step.size(); ++i) m.terms.push_back(h_step[i]);
    return m;
  }
  HarmonicPlaneMap g(std::size_t j) const {
    HarmonicPlaneMap m = h(h_step.size());
    for (std::size_t i = 0; i < j && i < g_step.size(); ++i) m.terms.push_back(g_step[i]);
    return m;
  }
};

struct LemmaOutput {
  CurveDisk D;
  HarmonicPlaneMap G;
  std::vector<CertRecord> report;
};

struct LemmaRun {
  double eps0 = 0.0;
  int attempts = 0;
  LemmaScaffold scaffold;
  DeformationLedger ledger;
  LemmaOutput output;
  std::vector<CertRecord> records;
};

// ---------------------------------------------------------------------------
// eps0 selection: every closed-form cap the construction relies on later,
// including the two final-bound cases that constrain eps0 through eps3.
// ---------------------------------------------------------------------------

inline double select_epsilon0(double r, double R, double eps1, double eps3, int = 1) {
  if (!(R > r && r > 0.0)) throw GeomError("select_epsilon0: needs R > r > 0");
  if (!(eps1 > 0.0 && eps3 > 0.0))
    throw GeomError("select_epsilon0: eps1 and eps3 must be positive");
  double best = (R - r) / 3.0;
  best = std::min(best, (R - r) / 5.0);
  best = std::min(best, (R - r) / 11.0);
  best = std::min(best, eps1 / 2.0);
  best = std::min(best, eps3 / 2.0);
  best = std::min(best, eps3 / 5.0);
  // quadratic cap: eps3 > 5 e + (6 e / R)(4R - 3r + 2e); positive root
  double A = 12.0 / R;
  double B = 5.0 + (24.0 * R - 18.0 * r) / R;
  best = std::min(best, (-B + std::sqrt(B * B + 4.0 * A * eps3)) / (2.0 * A));
  // linear cap: eps3 > 4 e + 6 e / R
  best = std::min(best, eps3 / (4.0 + 6.0 / R));
  return 0.9 * best;
}

namespace lemma_detail {

inline double wrap_angle(double a) {
  while (a <= -kPi) a += 2.0 * kPi;
  while (a > kPi) a -= 2.0 * kPi;
  return a;
}

inline Interval enclose_dev(const HarmonicPlaneMap& m, const CoverCell& cell, Vec2 v0) {
  CBox b = hp_enclose(m, cell);
  b.re = Interval(b.re.lo - v0.x, b.re.hi - v0.x);
  b.im = Interval(b.im.lo - v0.y, b.im.hi - v0.y);
  return abs(b);
}

// exact for non-crossing segments: the closest pair involves an endpoint
inline double seg_seg_dist(cplx a0, cplx a1, cplx b0, cplx b1) {
  double d = seg_dist(a0, b0, b1 - b0);
  d = std::min(d, seg_dist(a1, b0, b1 - b0));
  d = std::min(d, seg_dist(b0, a0, a1 - a0));
  d = std::min(d, seg_dist(b1, a0, a1 - a0));
  return d;
}

inline double curve_curve_dist(const ParamCurve& a, const ParamCurve& b) {
  double best = HUGE_VAL;
  for (std::size_t i = 0; i < a.segments(); ++i)
    for (std::size_t k = 0; k < b.segments(); ++k)
      best = std::min(best, seg_seg_dist(a.seg_a(i).value(), a.seg_b(i).value(),
                                         b.seg_a(k).value(), b.seg_b(k).value()));
  return best;
}

// log-spaced polar rectangles tiling [s0, s1] x [a0, a1] around base; the
// cells overshoot the annulus only tangentially, to second order in the
// angular width
inline std::vector<CoverCell> polar_patch_cells(cplx base, double s0, double s1, double a0,
                                                double a1, int nr, int na) {
  std::vector<CoverCell> cells;
  double l0 = std::log(s0), l1 = std::log(s1);
  for (int ir = 0; ir < nr; ++ir) {
    Interval mod(std::exp(l0 + (l1 - l0) * ir / nr), std::exp(l0 + (l1 - l0) * (ir + 1) / nr));
    for (int ia = 0; ia < na; ++ia) {
      Interval ang(a0 + (a1 - a0) * ia / na, a0 + (a1 - a0) * (ia + 1) / na);
      cells.push_back(box_cell(CBox(base) + polar_box(mod, ang)));
    }
  }
  return cells;
}

// halve from start until the certified predicate passes, refine the pass/fail
// window upward, and return 0.9 x the largest passing value
template <class Pred>
inline double shrink_to_cert(const Pred& pass, double start, const char* label,
                             int max_steps = 40) {
  double hi = start;
  int k = 0;
  while (!pass(hi)) {
    hi *= 0.5;
    if (++k >= max_steps) {
      std::ostringstream os;
      os << label << " certificate non-positive after " << max_steps
         << " bisection steps from " << start;
      throw GeomError(os.str());
    }
  }
  if (k > 0) {
    double lo = hi, top = 2.0 * hi;
    for (int i = 0; i < 10; ++i) {
      double mid = 0.5 * (lo + top);
      if (pass(mid))
        lo = mid;
      else
        top = mid;
    }
    hi = lo;
  }
  return 0.9 * hi;
}

}  // namespace lemma_detail

// ---------------------------------------------------------------------------
// Ingestion: geometry sanity plus the certified hypothesis r < |F| < R on the
// closed ring between the two input circles. The demo input attains both
// bounds with equality on the ring boundary, which outward-rounded enclosures
// can never certify strictly, so the check carries an explicit slack of
// 1e-5 (R - r) on each side; the slack is part of the record.
// ---------------------------------------------------------------------------

inline void lemma_ingest(const LemmaInput& in, std::vector<CertRecord>& rec) {
  if (!(in.R > in.r && in.r > 0.0)) throw GeomError("lemma input needs R > r > 0");
  if (!(in.eps1 > 0.0 && in.eps2 > 0.0 && in.eps3 > 0.0))
    throw GeomError("lemma input needs positive eps1, eps2, eps3");
  if (in.D1.bounded || in.D2.bounded)
    throw GeomError("lemma input disks must be end neighborhoods (unbounded circlines)");
  if (!disk_nested(in.D2, in.D1))
    throw GeomError("lemma input needs D1 contained in the interior of D2");
  double scale = std::max(1.0, in.D1.radius);
  if (std::abs(in.D1.center - in.D2.center) > 1e-9 * scale)
    throw GeomError("lemma scaffold requires concentric input circles");

  cplx c = in.D1.center;
  double r1 = in.D1.radius, r2 = in.D2.radius;
  ImplicitRegion ring;
  ring.clearance = [c, r1, r2](cplx z) {
    double t = std::abs(z - c);
    return std::min(t - r2, r1 - t);
  };
  ring.bx = Interval(c.real() - r1, c.real() + r1);
  ring.by = Interval(c.imag() - r1, c.imag() + r1);

  for (const Pt& pole : hp_poles(in.F)) {
    if (ring.clearance(pole.value()) >= 0.0)
      throw GeomError("lemma input map has a pole on the hypothesis ring");
    if (std::abs(pole.value() - c) <= r1)
      throw GeomError("lemma input map has a pole outside the deep end neighborhood");
    if (in.has_protected && in.protected_exterior.clearance(pole.value()) >= 0.0)
      throw GeomError("lemma input map has a pole inside the protected region");
  }

  double slack = 1e-5 * (in.R - in.r);
  CertOptions copt;
  copt.max_cells = 400000;
  auto cover = lemma_detail::polar_patch_cells(c, r2, r1, 0.0, 2.0 * kPi, 8, 4096);
  auto sample = [&in](const Pt& z) { return hp_norm_raw(in.F, z); };

  CertOutcome lo = certify_inf_above(
      [&in](const CoverCell& cell) { return hp_enclose_norm(in.F, cell); }, sample, cover,
      in.r - slack, copt);
  if (!lo.proven) {
    std::ostringstream os;
    os << "hypothesis r < |F| failed on the ring: |F| = " << lo.witness_value << " near ("
       << lo.witness.value().real() << ", " << lo.witness.value().imag() << ")";
    throw CertError(os.str());
  }
  rec.push_back(make_record("(hyp-lo)", Interval(lo.certified, HUGE_VAL), '>', in.r - slack,
                            "inf |F| over the exact polar ring cover; slack 1e-5 (R-r)"));

  CertOutcome hi = certify_sup_below(
      [&in](const CoverCell& cell) { return hp_enclose_norm(in.F, cell); }, sample, cover,
      in.R + slack, copt);
  if (!hi.proven) {
    std::ostringstream os;
    os << "hypothesis |F| < R failed on the ring: |F| = " << hi.witness_value << " near ("
       << hi.witness.value().real() << ", " << hi.witness.value().imag() << ")";
    throw CertError(os.str());
  }
  rec.push_back(make_record("(hyp-hi)", Interval(-HUGE_VAL, hi.certified), '<', in.R + slack,
                            "sup |F| over the exact polar ring cover; slack 1e-5 (R-r)"));
}

// ---------------------------------------------------------------------------
// Marker placement: concentric D3/D4, then the marker count doubles from 8
// until both the oscillation bound (a2) and the frame deviation bound (a3)
// certify. (a2) uses diameter x certified derivative bound on each disk B_j;
// (a3) is exact point arithmetic on the frames.
// ---------------------------------------------------------------------------

inline void place_markers(const LemmaInput& in, double eps0, LemmaScaffold& sc,
                          std::vector<CertRecord>& rec) {
  sc.eps0 = eps0;
  sc.center = in.D1.center;
  double r1 = in.D1.radius, r2 = in.D2.radius;
  double rho3 = 0.5 * (r1 + r2);
  double rho4 = 0.5 * (r2 + rho3);
  sc.D3 = Circline{sc.center, rho3, false};
  sc.D4 = Circline{sc.center, rho4, false};

  double dev_bound = eps0 / (3.0 * (in.R - in.r));
  for (int n = 8;; n *= 2) {
    sc.n = n;
    sc.p.assign(n, cplx(0.0));
    sc.b_center.assign(n, cplx(0.0));
    sc.S.assign(n, Frame{});
    sc.b_radius = 1.25 * (kPi * rho4 / n);
    double worst_osc = 0.0, worst_dev = 0.0;
    std::vector<Vec2> u(n);
    for (int j = 0; j < n; ++j) {
      double ang = 2.0 * kPi * j / n;
      sc.p[j] = sc.center + rho4 * std::polar(1.0, ang);
      sc.b_center[j] = sc.center + rho4 * std::polar(1.0, ang + kPi / n);
      Vec2 f = hp_eval_raw(in.F, Pt(sc.p[j]));
      if (!(f.norm() > 0.0)) throw GeomError("place_markers: |F| vanishes at a marker");
      u[j] = normalized(f);
      sc.S[j] = Frame::from_e1(u[j]);
      worst_osc = std::max(
          worst_osc, 2.0 * sc.b_radius * hp_deriv_sup_bound(in.F, sc.b_center[j], sc.b_radius));
    }
    for (int j = 0; j < n; ++j) {
      Vec2 d = u[(j + 1) % n] - u[j];
      worst_dev = std::max(worst_dev, d.norm());
    }
    if (worst_osc < eps0 && worst_dev < dev_bound) {
      rec.push_back(make_record("(a1)", Interval(n, n), '=', n,
                                "markers ordered on the D4 circle, radii r2 < rho4 < rho3 < r1"));
      rec.push_back(make_record("(a2)", Interval(0.0, worst_osc), '<', eps0,
                                "oscillation via diameter x derivative bound per disk"));
      rec.push_back(make_record("(a3)", Interval(worst_dev, worst_dev), '<', dev_bound,
                                "worst consecutive frame deviation"));
      return;
    }
    if (n >= 16384) {
      std::ostringstream os;
      os << "modulus-of-continuity failure: (a2)/(a3) not certified at n = " << n
         << " (oscillation " << worst_osc << " vs " << eps0 << ", frame deviation " << worst_dev
         << " vs " << dev_bound << ")";
      throw GeomError(os.str());
    }
  }
}

// ---------------------------------------------------------------------------
// Pocket radius: closed-form geometric caps plus the certified component
// bound, largest passing value by bisection, times 0.9.
// ---------------------------------------------------------------------------

inline void select_delta(const LemmaInput& in, LemmaScaffold& sc, std::vector<CertRecord>& rec) {
  int n = sc.n;
  double rho4 = sc.D4.radius, rho3 = sc.D3.radius, r2 = in.D2.radius;
  double cap_disk = 0.45 * std::min(rho4, std::min(rho4 - r2, rho3 - rho4));
  double cap_b = sc.b_radius - 2.0 * rho4 * std::sin(kPi / (2.0 * n));
  double cap_gap = rho4 * std::sin(kPi / n);
  if (!(cap_b > 0.0)) throw GeomError("select_delta: disks B_j cannot hold the pockets");

  double geo = 0.999 * std::min(cap_disk, std::min(cap_b, cap_gap));
  double worst_inf = HUGE_VAL;
  auto passes = [&](double d, double* inf_out) -> bool {
    double inf_all = HUGE_VAL;
    for (int j = 0; j < n; ++j) {
      ImplicitRegion pocket = disk_region(sc.p[j], d);
      auto enc = [&](const CoverCell& cell) {
        return hp_enclose_component(in.F, cell, sc.S[j], 1);
      };
      auto smp = [&](const Pt& z) { return hp_component_raw(in.F, z, sc.S[j], 1); };
      CertOptions copt;
      copt.max_cells = 20000;
      CertOutcome out =
          certify_inf_above(enc, smp, cover_region(pocket, d / 6.0), in.r, copt);
      if (!out.proven || !(out.certified > in.r)) return false;
      inf_all = std::min(inf_all, out.certified);
    }
    if (inf_out) *inf_out = inf_all;
    return true;
  };

  double hi = geo;
  int halvings = 0;
  while (!passes(hi, nullptr)) {
    hi *= 0.5;
    if (++halvings > 40 || hi < 1e-9 * rho4) {
      std::ostringstream os;
      os << "(d4) bisection collapsed below 1e-9 x geometry scale: the component bound "
            "F_(1,S_j) > r cannot be certified on any pocket radius";
      throw GeomError(os.str());
    }
  }
  if (halvings > 0) {
    double lo = hi, top = 2.0 * hi;
    for (int i = 0; i < 12; ++i) {
      double mid = 0.5 * (lo + top);
      if (passes(mid, nullptr))
        lo = mid;
      else
        top = mid;
    }
    hi = lo;
  }
  sc.delta = 0.9 * hi;
  if (!passes(sc.delta, &worst_inf))
    throw CertError("(d4) certificate lost at the final pocket radius");

  rec.push_back(make_record("(d1)", Interval(sc.delta, sc.delta), '<', cap_disk,
                            "pockets keep D4 with pockets attached a closed disk, clear of "
                            "the D2/D3 circles"));
  rec.push_back(make_record("(d2)", Interval(sc.delta, sc.delta), '<', cap_b,
                            "consecutive pocket pairs fit inside B_j"));
  rec.push_back(make_record("(d3)", Interval(sc.delta, sc.delta), '<', cap_gap,
                            "pairwise pocket disjointness"));
  rec.push_back(make_record("(d4)", Interval(worst_inf, HUGE_VAL), '>', in.r,
                            "certified inf of the first frame component over every pocket"));
}

// ---------------------------------------------------------------------------
// Pole orientation: the ray enters each pocket radially from the inside, so
// the pulled-back pole values are positive real by construction.
// ---------------------------------------------------------------------------

struct PoleRay {
  double theta = 0.0;
  Pt q;
};

inline PoleRay orient_pole(cplx p, cplx center, double delta) {
  cplx v = center - p;
  double m = std::abs(v);
  if (!(m > 0.0)) throw GeomError("orient_pole: marker coincides with the center");
  v /= m;
  return PoleRay{std::arg(v), Pt(p, delta * v)};
}

inline void orient_poles(LemmaScaffold& sc, std::vector<CertRecord>& rec) {
  int n = sc.n;
  sc.theta.assign(n, 0.0);
  sc.q.assign(n, Pt());
  sc.zeta.assign(n, RationalFunction{});
  double worst_rel = 0.0;
  for (int j = 0; j < n; ++j) {
    PoleRay ray = orient_pole(sc.p[j], sc.center, sc.delta);
    sc.theta[j] = ray.theta;
    sc.q[j] = ray.q;
    RationalFunction z;
    PoleTerm t;
    t.pole = Pt(sc.p[j]);
    t.coef = {std::polar(1.0, ray.theta)};
    z.poles.push_back(t);
    sc.zeta[j] = z;
    double prev = 0.0;
    for (int k = 0; k < 100; ++k) {
      double s = (1.0 - (double)k / 100.0) * sc.delta;  // distance from the marker
      cplx val = rf_eval_raw(sc.zeta[j], Pt(sc.p[j], s * std::polar(1.0, ray.theta)));
      worst_rel = std::max(worst_rel, std::abs(val.imag()) / std::abs(val));
      if (!(val.real() > prev))
        throw GeomError("orient_pole: ray values not increasing positive reals");
      prev = val.real();
    }
  }
  rec.push_back(make_record("(ray)", Interval(worst_rel, worst_rel), '<', 1e-12,
                            "relative imaginary part of the pole along its ray, 100 samples"));
}

// ---------------------------------------------------------------------------
// kappa: certified sup of each pole modulus over K_j, the deep compact minus
// the pocket. The modulus is radially monotone, so the sup sits on the pocket
// boundary; it is certified there on an exact concentric cover.
// ---------------------------------------------------------------------------

inline void select_kappa(const LemmaInput& in, LemmaScaffold& sc, std::vector<CertRecord>& rec) {
  int n = sc.n;
  double sup_all = 0.0;
  for (int j = 0; j < n; ++j) {
    const PoleTerm& pt = sc.zeta[j].poles[0];
    auto enc = [&](const CoverCell& cell) -> Interval {
      // on an arc concentric with the pole the modulus is the reciprocal
      // radius exactly; the box hull would be first order in the arc width
      if (cell.kind == CellKind::Arc && cell.center.base == pt.pole.base &&
          cell.center.off == pt.pole.off) {
        double m = std::abs(pt.coef[0]) / cell.radius;
        return Interval(m, m).expand(1e-13 * m);
      }
      return abs(rf_enclose(sc.zeta[j], cell));
    };
    auto smp = [&](const Pt& z) { return std::abs(rf_eval_raw(sc.zeta[j], z)); };
    CertOptions copt;
    copt.max_cells = 4000;
    MinResult mr = certified_max(enc, smp, cover_arc(Pt(sc.p[j]), sc.delta, 0.0, 2.0 * kPi, 64),
                                 1e-3 / sc.delta, copt);
    sup_all = std::max(sup_all, mr.bounds.hi);
  }
  sc.sup_zeta = sup_all;
  double cap = std::min(sc.eps0 / n, 3.0 * (in.R - in.r));
  sc.kappa = 0.9 * cap / sup_all;
  rec.push_back(make_record(
      "(Eq4)", Interval(0.0, sc.kappa * sup_all), '<', cap,
      "kappa x certified sup |zeta_j| on K_j; sup attained on the pocket boundary by "
      "radial monotonicity"));
}

// ---------------------------------------------------------------------------
// a_j: the unique ray point where kappa x pole value equals 3 (R - r).
// ---------------------------------------------------------------------------

inline void locate_a(const LemmaInput& in, LemmaScaffold& sc, std::vector<CertRecord>& rec) {
  int n = sc.n;
  double target = 3.0 * (in.R - in.r);
  int guard = 0;
  sc.rho_a = sc.kappa / target;
  while (sc.rho_a >= 0.999 * sc.delta) {
    sc.kappa *= 0.5;
    sc.rho_a = sc.kappa / target;
    if (++guard > 60) throw GeomError("locate_a: kappa reduction failed to enter the pocket");
  }
  if (guard > 0) {
    double cap = std::min(sc.eps0 / n, 3.0 * (in.R - in.r));
    rec.push_back(make_record("(Eq4)", Interval(0.0, sc.kappa * sc.sup_zeta), '<', cap,
                              "re-verified after kappa reduction"));
  }
  sc.t.assign(n, 1.0 - sc.rho_a / sc.delta);
  sc.a.assign(n, Pt());
  double worst_rel = 0.0;
  for (int j = 0; j < n; ++j) {
    sc.a[j] = Pt(sc.p[j], sc.rho_a * std::polar(1.0, sc.theta[j]));
    cplx val = rf_eval_raw(sc.zeta[j], sc.a[j]);
    worst_rel = std::max(worst_rel, std::abs(sc.kappa * val.real() - target) / target);
  }
  rec.push_back(make_record("(Eq4-a)", Interval(worst_rel, worst_rel), '<', 1e-10,
                            "relative deviation of kappa zeta_j(a_j) from 3 (R - r)"));
}

// ---------------------------------------------------------------------------
// h stage: deform along each marker frame by the scaled pole. (b1) reuses the
// certified pole sup over K_j; (b2)-(b4) are exact point evaluations at the
// anchored points a_j. Any failed bound aborts with its label so the driver
// can retry with a halved eps0.
// ---------------------------------------------------------------------------

inline void build_h_stage(const LemmaInput& in, const LemmaScaffold& sc,
                          DeformationLedger& led, std::vector<CertRecord>& rec) {
  int n = sc.n;
  led.h0 = in.F;
  led.h_step.clear();
  led.h_at_a_stage.assign(n, Vec2{});
  led.h_at_a.assign(n, Vec2{});

  double b1_val = sc.kappa * sc.sup_zeta;
  double b1_bound = sc.eps0 / n;
  rec.push_back(make_record("(b1)", Interval(0.0, b1_val), '<', b1_bound,
                            "per-step deviation off the pocket, certified on K_j"));
  if (!(b1_val < b1_bound)) throw CertError("(b1) certificate failed after kappa selection");

  HarmonicPlaneMap cur = in.F;
  Vec2 prev_av{};
  double worst_b2 = 0.0;
  for (int j = 0; j < n; ++j) {
    cur = hp_deform(cur, sc.S[j], rf_scale(sc.zeta[j], cplx(sc.kappa)));
    led.h_step.push_back(cur.terms.back());
    Vec2 after = hp_eval_raw(cur, sc.a[j]);
    led.h_at_a_stage[j] = after;
    if (j >= 1) worst_b2 = std::max(worst_b2, (after - prev_av).norm());
    prev_av = after;
  }
  rec.push_back(make_record("(b2)", Interval(worst_b2, worst_b2), '<', 4.0 * sc.eps0,
                            "consecutive stage values at the a points, pairs j >= 2"));
  if (!(worst_b2 < 4.0 * sc.eps0)) {
    std::ostringstream os;
    os << "(b2) certificate failed: " << worst_b2 << " vs " << 4.0 * sc.eps0 << " (margin "
       << 4.0 * sc.eps0 - worst_b2 << ")";
    throw CertError(os.str());
  }

  double worst_b3 = 0.0, min_b4 = HUGE_VAL;
  for (int j = 0; j < n; ++j) led.h_at_a[j] = hp_eval_raw(cur, sc.a[j]);
  for (int j = 0; j < n; ++j) {
    worst_b3 = std::max(worst_b3, (led.h_at_a[j] - led.h_at_a[(j + 1) % n]).norm());
    min_b4 = std::min(min_b4, led.h_at_a[j].norm());
  }
  rec.push_back(make_record("(b3)", Interval(worst_b3, worst_b3), '<', 6.0 * sc.eps0,
                            "final-stage spread between consecutive a points, cyclic"));
  if (!(worst_b3 < 6.0 * sc.eps0)) {
    std::ostringstream os;
    os << "(b3) certificate failed: " << worst_b3 << " vs " << 6.0 * sc.eps0;
    throw CertError(os.str());
  }
  double b4_bound = 2.0 * in.R - in.r;
  rec.push_back(
      make_record("(b4)", Interval(min_b4, HUGE_VAL), '>', b4_bound, "norm at every a point"));
  if (!(min_b4 > b4_bound)) {
    std::ostringstream os;
    os << "(b4) certificate failed: " << min_b4 << " vs " << b4_bound << " (margin "
       << min_b4 - b4_bound << ")";
    throw CertError(os.str());
  }
}

// ---------------------------------------------------------------------------
// Carving. The mouth arcs are concentric with their pockets (transversality
// to the radial rays is exact); the strips are radial sectors; the carved
// compact is assembled as one polygonal walk whose pieces are exactly the
// mouths and the connecting arcs. Certification cost scales with the square
// of the marker count, so a projection gate runs first and reports infeasible
// inputs instead of starting a sweep that cannot finish.
// ---------------------------------------------------------------------------

namespace lemma_detail {

inline void append_vertices(ParamCurve& dst, const ParamCurve& piece) {
  for (const Pt& v : piece.v) {
    if (!dst.v.empty()) {
      const Pt& last = dst.v.back();
      if (last.base == v.base && last.off == v.off) continue;
    }
    dst.v.push_back(v);
  }
}

}  // namespace lemma_detail

inline void carve_D6(const LemmaInput& in, LemmaScaffold& sc, const DeformationLedger& led,
                     const LemmaBudgets& budgets, std::vector<CertRecord>& rec) {
  int n = sc.n;
  double projected = 2560.0 * (double)n * ((double)n + 1.0);
  if (projected > budgets.max_certified_ops) {
    std::ostringstream os;
    os << "carve stage needs on the order of " << projected
       << " certified interval evaluations (40 bisection steps x 64 cells per sweep, summed "
          "over prefix maps of sizes 1.."
       << n << " across " << n
       << " pockets), which exceeds budgets.max_certified_ops = " << budgets.max_certified_ops
       << "; the mouth and strip certificates cannot complete at this marker density";
    throw FeasibilityError(os.str());
  }

  double rho4 = sc.D4.radius;
  sc.phi.assign(n, 0.0);
  sc.w.assign(n, 0.0);
  sc.nu.assign(n, 0.0);
  sc.C.assign(n, ParamCurve{});
  sc.Q.assign(n, ParamCurve{});

  CertOptions copt;
  copt.max_cells = 50000;

  // mouth widths for the value bound, then strip widths for the pole bounds
  HarmonicPlaneMap hj = led.h0;
  double worst_b5 = 0.0, worst_b7_hi = 0.0, min_b7_lo = HUGE_VAL;
  double b7_bound = 3.0 * (in.R - in.r) + sc.eps0;
  for (int j = 0; j < n; ++j) {
    hj.terms.push_back(led.h_step[j]);
    Vec2 ha = led.h_at_a_stage[j];
    auto b5_pass = [&](double phi) -> bool {
      auto cells = cover_arc(Pt(sc.p[j]), sc.rho_a, sc.theta[j] - phi, sc.theta[j] + phi,
                             std::max(8, (int)(phi / 0.05)));
      auto enc = [&](const CoverCell& cell) { return lemma_detail::enclose_dev(hj, cell, ha); };
      auto smp = [&](const Pt& z) { return (hp_eval_raw(hj, z) - ha).norm(); };
      CertOutcome out = certify_sup_below(enc, smp, cells, sc.eps0 * (1.0 - 1e-12), copt);
      return out.proven;
    };
    sc.phi[j] = lemma_detail::shrink_to_cert(b5_pass, 1.4, "(b5)");

    auto b7_pass = [&](double w) -> bool {
      auto cells = lemma_detail::polar_patch_cells(sc.p[j], sc.rho_a, sc.delta,
                                                   sc.theta[j] - w, sc.theta[j] + w, 8,
                                                   std::max(8, (int)(w / 0.1)));
      auto enc = [&](const CoverCell& cell) {
        return iscale(rf_enclose(sc.zeta[j], cell).re, sc.kappa);
      };
      auto smp = [&](const Pt& z) { return sc.kappa * rf_eval_raw(sc.zeta[j], z).real(); };
      CertOutcome pos = certify_inf_above(enc, smp, cells, 0.0, copt);
      if (!pos.proven || !(pos.certified > 0.0)) return false;
      CertOutcome top = certify_sup_below(enc, smp, cells, b7_bound * (1.0 - 1e-12), copt);
      return top.proven;
    };
    sc.w[j] = lemma_detail::shrink_to_cert(b7_pass, std::min(sc.phi[j], 1.4), "(b7)");

    // record values at the final widths
    {
      auto cells = cover_arc(Pt(sc.p[j]), sc.rho_a, sc.theta[j] - sc.phi[j],
                             sc.theta[j] + sc.phi[j], 16);
      auto enc = [&](const CoverCell& cell) { return lemma_detail::enclose_dev(hj, cell, ha); };
      auto smp = [&](const Pt& z) { return (hp_eval_raw(hj, z) - ha).norm(); };
      CertOutcome out = certify_sup_below(enc, smp, cells, sc.eps0 * (1.0 - 1e-12), copt);
      if (!out.proven) throw CertError("(b5) certificate lost at the final mouth width");
      worst_b5 = std::max(worst_b5, out.certified);
      auto scells = lemma_detail::polar_patch_cells(sc.p[j], sc.rho_a, sc.delta,
                                                    sc.theta[j] - sc.w[j],
                                                    sc.theta[j] + sc.w[j], 8, 8);
      auto senc = [&](const CoverCell& cell) {
        return iscale(rf_enclose(sc.zeta[j], cell).re, sc.kappa);
      };
      auto ssmp = [&](const Pt& z) { return sc.kappa * rf_eval_raw(sc.zeta[j], z).real(); };
      CertOutcome pos = certify_inf_above(senc, ssmp, scells, 0.0, copt);
      CertOutcome top = certify_sup_below(senc, ssmp, scells, b7_bound * (1.0 - 1e-12), copt);
      if (!pos.proven || !top.proven)
        throw CertError("(b7) certificate lost at the final strip width");
      min_b7_lo = std::min(min_b7_lo, pos.certified);
      worst_b7_hi = std::max(worst_b7_hi, top.certified);
    }
  }
  rec.push_back(make_record("(b5)", Interval(0.0, worst_b5), '<', sc.eps0,
                            "value spread along every mouth arc"));
  rec.push_back(make_record("(b6)", Interval(0.0, 0.0), '<', sc.eps0,
                            "identity by construction: the step difference equals the scaled "
                            "pole term exactly"));
  rec.push_back(make_record("(b7)", Interval(min_b7_lo, worst_b7_hi), '<', b7_bound,
                            "scaled pole component range over every strip; lower end positive"));
  if (!(min_b7_lo > 0.0)) throw CertError("(b7) lower bound not positive");

  // boundary walk: mouth arcs joined by strip edges, pocket bites and the
  // outer circle arcs; the walk is built piecewise so the decomposition into
  // mouths and connecting pieces is structural
  double dx = 2.0 * std::asin(0.5 * sc.delta / rho4);
  ParamCurve walk;
  walk.closed = true;
  std::vector<ParamCurve> mouths(n), joins(n);
  auto pocket_point = [&](int j, double s, double psi) {
    return Pt(sc.p[j], s * std::polar(1.0, sc.theta[j] + psi));
  };
  for (int j = 0; j < n; ++j) {
    int jn = (j + 1) % n;
    double marker_ang = 2.0 * kPi * j / n;
    double marker_ang_next = 2.0 * kPi * (j + 1) / n;

    ParamCurve mouth;
    int mseg = 8;
    for (int k = 0; k <= mseg; ++k)
      mouth.v.push_back(pocket_point(j, sc.rho_a, sc.w[j] - 2.0 * sc.w[j] * k / mseg));
    mouths[j] = mouth;

    ParamCurve join;
    join.v.push_back(pocket_point(j, sc.rho_a, -sc.w[j]));
    join.v.push_back(pocket_point(j, std::sqrt(sc.rho_a * sc.delta), -sc.w[j]));
    join.v.push_back(pocket_point(j, sc.delta, -sc.w[j]));
    cplx exitp = sc.center + rho4 * std::polar(1.0, marker_ang + dx);
    double psi_exit = lemma_detail::wrap_angle(std::arg(exitp - sc.p[j]) - sc.theta[j]);
    if (!(psi_exit < -sc.w[j] && psi_exit > -kPi))
      throw GeomError("carve: pocket bite geometry out of order on the exit side");
    int bseg = 6;
    for (int k = 1; k <= bseg; ++k)
      join.v.push_back(pocket_point(j, sc.delta, -sc.w[j] + (psi_exit + sc.w[j]) * k / bseg));
    int aseg = 24;
    double a0 = marker_ang + dx, a1 = marker_ang_next - dx;
    if (!(a1 > a0)) throw GeomError("carve: pockets overlap along the outer circle");
    for (int k = 1; k <= aseg; ++k)
      join.v.push_back(Pt(sc.center + rho4 * std::polar(1.0, a0 + (a1 - a0) * k / aseg)));
    cplx entryp = sc.center + rho4 * std::polar(1.0, marker_ang_next - dx);
    double psi_entry = lemma_detail::wrap_angle(std::arg(entryp - sc.p[jn]) - sc.theta[jn]);
    if (!(psi_entry > sc.w[jn] && psi_entry < kPi))
      throw GeomError("carve: pocket bite geometry out of order on the entry side");
    for (int k = 1; k <= bseg; ++k)
      join.v.push_back(pocket_point(jn, sc.delta, psi_entry + (sc.w[jn] - psi_entry) * k / bseg));
    join.v.push_back(pocket_point(jn, std::sqrt(sc.rho_a * sc.delta), sc.w[jn]));
    join.v.push_back(pocket_point(jn, sc.rho_a, sc.w[jn]));
    joins[j] = join;
  }
  for (int j = 0; j < n; ++j) {
    lemma_detail::append_vertices(walk, mouths[j]);
    lemma_detail::append_vertices(walk, joins[j]);
  }
  if (!walk.v.empty()) {
    const Pt& first = walk.v.front();
    const Pt& last = walk.v.back();
    if (first.base == last.base && first.off == last.off) walk.v.pop_back();
  }
  validate_curve(walk);
  if (curve_signed_area(walk) <= 0.0)
    throw GeomError("carve: boundary walk is not positively oriented");
  sc.dD6 = walk;
  sc.C = mouths;
  sc.Q = joins;
  sc.K.outer = walk;
  sc.K.holes.clear();
  sc.sigma_d6 = region_from_polygon(sc.K);
  if (!region_contains(sc.K, sc.center))
    throw GeomError("carve: the carved compact lost its center");
  for (int j = 0; j < n; ++j)
    if (region_contains(sc.K, sc.p[j]))
      throw GeomError("carve: a marker ended up inside the carved compact");

  // vertex partition of the walk into mouths and joins
  {
    std::size_t total = 0;
    for (int j = 0; j < n; ++j) total += mouths[j].v.size() + joins[j].v.size();
    std::size_t dedup = total - 2 * (std::size_t)n;  // shared endpoints between pieces
    bool ok = dedup == walk.v.size();
    rec.push_back(make_record("(D6)", Interval((double)walk.v.size(), (double)walk.v.size()),
                              '=', (double)dedup,
                              ok ? "boundary walk is simple, positively oriented, and split "
                                   "exactly into mouth and join pieces"
                                 : "vertex partition mismatch"));
    if (!ok) throw GeomError("carve: boundary decomposition check failed");
  }

  // mouth neighborhoods: grown to the largest radius keeping the final-stage
  // values within 3 eps0 over the part of the neighborhood inside the compact
  HarmonicPlaneMap hn = led.h(n);
  double worst_f1 = 0.0;
  for (int j = 0; j < n; ++j) {
    Vec2 ha = led.h_at_a[j];
    auto f1_pass = [&](double nu) -> bool {
      auto cells = lemma_detail::polar_patch_cells(sc.p[j], sc.rho_a, sc.rho_a + nu,
                                                   sc.theta[j] - sc.w[j],
                                                   sc.theta[j] + sc.w[j], 6, 8);
      auto enc = [&](const CoverCell& cell) { return lemma_detail::enclose_dev(hn, cell, ha); };
      auto smp = [&](const Pt& z) { return (hp_eval_raw(hn, z) - ha).norm(); };
      CertOutcome out =
          certify_sup_below(enc, smp, cells, 3.0 * sc.eps0 * (1.0 - 1e-12), copt);
      return out.proven;
    };
    sc.nu[j] = lemma_detail::shrink_to_cert(
        f1_pass, 0.45 * std::min(sc.rho_a, sc.delta - sc.rho_a), "(f1)");
    auto cells = lemma_detail::polar_patch_cells(sc.p[j], sc.rho_a, sc.rho_a + sc.nu[j],
                                                 sc.theta[j] - sc.w[j], sc.theta[j] + sc.w[j],
                                                 6, 8);
    auto enc = [&](const CoverCell& cell) { return lemma_detail::enclose_dev(hn, cell, ha); };
    auto smp = [&](const Pt& z) { return (hp_eval_raw(hn, z) - ha).norm(); };
    CertOutcome out =
        certify_sup_below(enc, smp, cells, 3.0 * sc.eps0 * (1.0 - 1e-12), copt);
    if (!out.proven) throw CertError("(f1) certificate lost at the final neighborhood radius");
    worst_f1 = std::max(worst_f1, out.certified);
  }
  rec.push_back(make_record("(f1)", Interval(0.0, worst_f1), '<', 3.0 * sc.eps0,
                            "final-stage values near every mouth, inside the compact"));

  // pole home: the offset set at depth m7, between the collar width and the
  // mouth radius so the markers stay inside it
  sc.m7 = 0.7 * sc.rho_a;
  {
    auto cl = sc.sigma_d6.clearance;
    double m7 = sc.m7;
    sc.D7.clearance = [cl, m7](cplx z) { return -cl(z) - m7; };
    double spanx = sc.sigma_d6.bx.width(), spany = sc.sigma_d6.by.width();
    sc.D7.bx = sc.sigma_d6.bx.expand(0.35 * spanx);
    sc.D7.by = sc.sigma_d6.by.expand(0.35 * spany);
  }
  double worst_marker = HUGE_VAL;
  for (int j = 0; j < n; ++j)
    worst_marker = std::min(worst_marker, sc.D7.clearance(sc.p[j]));
  rec.push_back(make_record("(D7)", Interval(worst_marker, HUGE_VAL), '>', 0.0,
                            "markers sit inside the pole home at offset depth 0.7 x mouth "
                            "radius"));
  if (!(worst_marker > 0.0)) throw GeomError("carve: pole home does not contain the markers");

  // collar width: closed-form caps from the three collar conditions
  double cap_pair = HUGE_VAL, cap_b = HUGE_VAL, cap_pocket = HUGE_VAL;
  for (int j = 0; j < n; ++j) {
    for (int k = j + 1; k < n; ++k)
      cap_pair = std::min(cap_pair, 0.5 * lemma_detail::curve_curve_dist(sc.Q[j], sc.Q[k]));
    double far = 0.0;
    for (const Pt& v : sc.Q[j].v)
      far = std::max(far, std::abs(v.value() - sc.b_center[j]));
    cap_b = std::min(cap_b, sc.b_radius - far);
    for (int k = 0; k < n; ++k) {
      if (k == j || k == (j + 1) % n) continue;
      cap_pocket = std::min(cap_pocket, curve_dist(sc.Q[j], sc.p[k]) - sc.delta);
    }
  }
  double caps[3] = {cap_pair, std::min(cap_b, 0.95 * sc.m7), cap_pocket};
  sc.L0 = 0.9 * std::min(caps[0], std::min(caps[1], caps[2]));
  if (!(sc.L0 > 0.0)) throw GeomError("carve: no positive collar width satisfies the caps");
  rec.push_back(make_record("(Q1)", Interval(2.0 * cap_pair, HUGE_VAL), '>', 0.0,
                            "pairwise distance between the connecting pieces"));
  rec.push_back(make_record("(Q2)", Interval(cap_b, HUGE_VAL), '>', 0.0,
                            "slack of each connecting piece inside its disk B_j"));
  rec.push_back(make_record("(Q3)", Interval(cap_pocket, HUGE_VAL), '>', 0.0,
                            "clearance of each connecting piece from non-adjacent pockets"));
  rec.push_back(make_record("(L0-1)", Interval(sc.L0, sc.L0), '<', cap_pair,
                            "collars pairwise disjoint"));
  rec.push_back(make_record("(L0-2)", Interval(sc.L0, sc.L0), '<',
                            std::min(cap_b, 0.95 * sc.m7),
                            "collars inside B_j and clear of the pole home"));
  rec.push_back(make_record("(L0-3)", Interval(sc.L0, sc.L0), '<', cap_pocket,
                            "collars clear of non-adjacent pockets"));
}

// ---------------------------------------------------------------------------
// g stage: per connecting piece, a certified minimum fixes the push height
// tau_j; the two-compact approximation supplies the push function with
// certified bounds on and off the collar.
// ---------------------------------------------------------------------------

inline void build_g_stage(const LemmaInput& in, const LemmaScaffold& sc,
                          DeformationLedger& led, const LemmaBudgets& budgets,
                          std::vector<CertRecord>& rec) {
  int n = sc.n;
  led.sbar.assign(n, Frame{});
  led.tau.assign(n, 0.0);
  led.g_step.clear();
  led.c1_sup.clear();
  led.c2_sup.clear();

  HarmonicPlaneMap gprev = led.h((std::size_t)n);
  double worst_c1 = 0.0, worst_c2 = 0.0, worst_tau = 0.0;
  for (int j = 0; j < n; ++j) {
    led.sbar[j] = Frame::from_e2(normalized(led.h_at_a[j]));

    auto enc = [&](const CoverCell& cell) {
      return hp_enclose_component(gprev, cell, led.sbar[j], 1);
    };
    auto smp = [&](const Pt& z) { return hp_component_raw(gprev, z, led.sbar[j], 1); };
    CertOptions copt;
    copt.max_cells = 100000;
    MinResult mr = certified_min(enc, smp, cover_curve(sc.Q[j], sc.L0), sc.eps0 / (8.0 * n),
                                 copt);
    double tau = 2.0 * in.R - in.r - mr.bounds.lo;
    led.tau[j] = tau;
    worst_tau = std::max(worst_tau, std::abs(tau));
    if (!(tau > 0.0)) {
      // the piece already sits above the push height; no deformation needed
      led.c1_sup.push_back(0.0);
      led.c2_sup.push_back(0.0);
      continue;
    }

    ParamCurve qj = sc.Q[j];
    double L0 = sc.L0;
    TwoCompactSpec rs;
    rs.A = region_intersect(sc.sigma_d6, ImplicitRegion{[qj, L0](cplx z) {
                                                          return curve_dist(qj, z) - L0;
                                                        },
                                                        sc.sigma_d6.bx, sc.sigma_d6.by});
    Interval qbx, qby;
    curve_bbox(qj, qbx, qby);
    rs.B = ImplicitRegion{[qj, L0](cplx z) { return 0.5 * L0 - curve_dist(qj, z); },
                          qbx.expand(L0), qby.expand(L0)};
    rs.tau = tau;
    rs.tolerance = 0.98 * sc.eps0 / n;
    rs.pole_home = sc.D7;
    ImplicitRegion band{[qj, L0](cplx z) {
                          double d = curve_dist(qj, z);
                          return std::min(d - 0.49 * L0, 1.02 * L0 - d);
                        },
                        qbx.expand(1.1 * L0), qby.expand(1.1 * L0)};
    std::size_t midv = qj.v.size() / 2;
    cplx vmid = qj.v[midv].value();
    cplx outd = vmid - sc.center;
    outd /= std::abs(outd);
    ImplicitRegion corridor =
        stadium_region(vmid + 0.6 * sc.L0 * outd, vmid + 2.5 * sc.m7 * outd, 0.4 * sc.L0);
    rs.channel = region_union(band, corridor);

    RoydenOptions ro;
    ro.max_poles = budgets.max_poles;
    ro.max_push_steps = budgets.max_push_steps;
    RoydenTrace tr;
    RationalFunction xi;
    try {
      xi = royden_approximate(rs, ro, &tr);
    } catch (const FeasibilityError& e) {
      throw FeasibilityError(std::string("g stage, piece ") + std::to_string(j + 1) + ": " +
                             e.what());
    } catch (const CertError& e) {
      throw CertError(std::string("g stage, piece ") + std::to_string(j + 1) + ": " + e.what());
    } catch (const GeomError& e) {
      throw GeomError(std::string("g stage, piece ") + std::to_string(j + 1) + ": " + e.what());
    }
    gprev = hp_deform(gprev, led.sbar[j], xi);
    led.g_step.push_back(gprev.terms.back());
    led.c1_sup.push_back(tr.cert_A);
    led.c2_sup.push_back(tr.cert_B);
    worst_c1 = std::max(worst_c1, tr.cert_A);
    worst_c2 = std::max(worst_c2, tr.cert_B);
  }
  rec.push_back(make_record("(tau)", Interval(0.0, worst_tau), '<', HUGE_VAL,
                            "largest push height across the connecting pieces"));
  rec.push_back(make_record("(c1)", Interval(0.0, worst_c1), '<', sc.eps0 / n,
                            "certified sup of each push off its collar"));
  if (!(worst_c1 < sc.eps0 / n)) throw CertError("(c1) certificate failed");
  rec.push_back(make_record("(c2)", Interval(0.0, worst_c2), '<', sc.eps0 / n,
                            "certified deviation from the push height on the half collar"));
  if (!(worst_c2 < sc.eps0 / n)) throw CertError("(c2) certificate failed");
}

// ---------------------------------------------------------------------------
// Finalization: the three global bounds for the carved map, then the level
// contour that realizes the output disk, certified inside its band.
// ---------------------------------------------------------------------------

inline LemmaOutput lemma_finalize(const LemmaInput& in, const LemmaScaffold& sc,
                                  const DeformationLedger& led,
                                  std::vector<CertRecord>& rec) {
  int n = sc.n;
  HarmonicPlaneMap G = led.g((std::size_t)n);
  double r2 = in.D2.radius, rho4 = sc.D4.radius;

  // accumulated closeness on the untouched compact
  double acc = (double)n * sc.kappa * sc.sup_zeta;
  for (double v : led.c1_sup) acc += v;
  if (!(rho4 - sc.delta - sc.L0 > r2))
    throw GeomError("finalize: pockets or collars reach the inner hypothesis circle");
  rec.push_back(make_record("(L4-1)", Interval(0.0, acc), '<', in.eps1,
                            "accumulated per-step certified sups; pockets and collars stay "
                            "outside the inner circle"));
  if (!(acc < in.eps1)) throw CertError("(L4-1) certificate failed");

  CertOptions copt;
  copt.max_cells = 400000;
  auto enc_norm = [&G](const CoverCell& cell) { return hp_enclose_norm(G, cell); };
  auto smp_norm = [&G](const Pt& z) { return hp_norm_raw(G, z); };

  CertOutcome on_boundary =
      certify_inf_above(enc_norm, smp_norm, cover_curve(sc.dD6, sc.L0), in.R, copt);
  rec.push_back(make_record("(L4-2)", Interval(on_boundary.certified, HUGE_VAL), '>', in.R,
                            "norm along the carved boundary"));
  if (!on_boundary.proven || !(on_boundary.certified > in.R)) {
    std::ostringstream os;
    os << "(L4-2) certificate failed near (" << on_boundary.witness.value().real() << ", "
       << on_boundary.witness.value().imag() << ")";
    throw CertError(os.str());
  }

  ImplicitRegion outer_part = region_intersect(
      sc.sigma_d6, ImplicitRegion{[&in](cplx z) { return std::abs(z - in.D2.center) - in.D2.radius; },
                                  sc.sigma_d6.bx, sc.sigma_d6.by});
  CertOutcome deep = certify_inf_above(enc_norm, smp_norm,
                                       cover_region(outer_part, 0.02 * (rho4 - r2)),
                                       in.r - in.eps3, copt);
  rec.push_back(make_record("(L4-3)", Interval(deep.certified, HUGE_VAL), '>', in.r - in.eps3,
                            "norm on the carved compact beyond the inner circle"));
  if (!deep.proven || !(deep.certified > in.r - in.eps3))
    throw CertError("(L4-3) certificate failed");

  // level contour between the carved boundary and the inner circle
  Region search;
  search.outer = sc.dD6;
  search.holes.push_back(circle_curve(in.D2.center, r2, 256));
  double resolution = (rho4 - r2) / 60.0;
  auto field = [&G](cplx z) { return hp_norm_raw(G, Pt(z)); };

  ParamCurve contour;
  double level_used = 0.0;
  std::string fail_note;
  const int ks[6] = {5, 4, 6, 7, 8, 9};
  bool done = false;
  for (int ki = 0; ki < 6 && !done; ++ki) {
    double level = in.R - in.eps2 * ks[ki] / 10.0;
    ParamCurve cand;
    try {
      cand = extract_level_contour(field, level, search, resolution);
    } catch (const GeomError& e) {
      fail_note = e.what();
      continue;
    }
    CertOutcome blo = certify_inf_above(enc_norm, smp_norm,
                                        cover_curve(cand, 2.0 * resolution),
                                        in.R - in.eps2, copt);
    if (!blo.proven || !(blo.certified > in.R - in.eps2)) {
      fail_note = "lower band bound not certified";
      continue;
    }
    CertOutcome bhi = certify_sup_below(enc_norm, smp_norm,
                                        cover_curve(cand, 2.0 * resolution),
                                        in.R * (1.0 - 1e-12), copt);
    if (!bhi.proven) {
      fail_note = "upper band bound not certified";
      continue;
    }
    contour = cand;
    level_used = level;
    std::ostringstream os;
    os << "norm band along the output boundary at level " << level_used
       << "; lower edge above R - eps2";
    rec.push_back(make_record("(L3-3)", Interval(blo.certified, bhi.certified), '<', in.R,
                              os.str()));
    done = true;
  }
  if (!done) {
    std::ostringstream os;
    os << "(L3-3) no level in the fallback ladder produced a certified band contour: "
       << fail_note;
    throw GeomError(os.str());
  }

  // nesting of the output disk between the input circles
  double vmin = HUGE_VAL, vmax = 0.0;
  for (const Pt& v : contour.v) {
    double d = std::abs(v.value() - in.D1.center);
    vmin = std::min(vmin, d);
    vmax = std::max(vmax, d);
  }
  bool nest = vmax < in.D1.radius && vmin > r2;
  rec.push_back(make_record("(L3-1)", Interval(vmin, vmax), '<', in.D1.radius,
                            nest ? "output boundary strictly between the input circles"
                                 : "nesting violated"));
  if (!nest) throw GeomError("(L3-1) output disk not nested between the input circles");

  rec.push_back(make_record("(L3-2)", Interval(0.0, acc), '<', in.eps1,
                            "equals the accumulated bound (L4-1) on the untouched compact"));

  ImplicitRegion inside_contour = region_from_polygon(Region{contour, {}});
  ImplicitRegion outside_ring = region_intersect(
      inside_contour,
      ImplicitRegion{[&in](cplx z) { return std::abs(z - in.D2.center) - in.D2.radius; },
                     inside_contour.bx, inside_contour.by});
  CertOutcome concl4 = certify_inf_above(enc_norm, smp_norm,
                                         cover_region(outside_ring, 0.02 * (rho4 - r2)),
                                         in.r - in.eps3, copt);
  rec.push_back(make_record("(L3-4)", Interval(concl4.certified, HUGE_VAL), '>',
                            in.r - in.eps3,
                            "norm between the inner circle and the output boundary"));
  if (!concl4.proven || !(concl4.certified > in.r - in.eps3))
    throw CertError("(L3-4) certificate failed");

  double worst_pole = HUGE_VAL;
  bool poles_ok = true;
  for (const Pt& pole : hp_poles(G)) {
    cplx z = pole.value();
    if (winding_number(contour, z) != 0) poles_ok = false;
    if (std::abs(z - in.D2.center) <= r2) poles_ok = false;
    worst_pole = std::min(worst_pole, sc.D7.clearance(z));
  }
  rec.push_back(make_record("(poles)", Interval(worst_pole, HUGE_VAL), '>', 0.0,
                            poles_ok ? "every pole sits in the pole home on the disk side"
                                     : "a pole escaped the output disk"));
  if (!(worst_pole > 0.0) || !poles_ok)
    throw GeomError("finalize: poles escaped the pole home");

  LemmaOutput out;
  out.D = CurveDisk{contour, false};
  out.G = G;
  out.report = rec;
  return out;
}

// ---------------------------------------------------------------------------
// Driver: ingestion once, then the pipeline with the halved-eps0 retry policy
// for failed h-stage bounds.
// ---------------------------------------------------------------------------

inline LemmaRun run_lemma(const LemmaInput& in, const LemmaOptions& opt = {}) {
  LemmaRun run;
  lemma_ingest(in, run.records);
  double eps0 = opt.epsilon0_override > 0.0
                    ? opt.epsilon0_override
                    : select_epsilon0(in.r, in.R, in.eps1, in.eps3);
  for (int attempt = 0;; ++attempt) {
    run.attempts = attempt + 1;
    run.eps0 = eps0;
    LemmaScaffold sc;
    DeformationLedger led;
    bool staged = false;
    try {
      place_markers(in, eps0, sc, run.records);
      select_delta(in, sc, run.records);
      orient_poles(sc, run.records);
      select_kappa(in, sc, run.records);
      locate_a(in, sc, run.records);
      build_h_stage(in, sc, led, run.records);
      staged = true;
    } catch (const CertError& e) {
      if (attempt >= opt.max_retries) throw;
      eps0 *= 0.5;
      run.records.push_back(make_record("(retry)", Interval(eps0, eps0), '=', eps0,
                                        std::string("halved eps0 after: ") + e.what()));
    }
    if (!staged) continue;
    run.scaffold = sc;
    carve_D6(in, run.scaffold, led, opt.budgets, run.records);
    build_g_stage(in, run.scaffold, led, opt.budgets, run.records);
    run.ledger = led;
    run.output = lemma_finalize(in, run.scaffold, run.ledger, run.records);
    return run;
  }
}

}  // namespace harmap
