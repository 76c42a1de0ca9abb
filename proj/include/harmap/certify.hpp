#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "harmonic.hpp"
#include "numeric.hpp"
#include "rational.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// Certified bounds over coverings.
//
// A covering is a list of cells whose union contains the region of interest
// (cells may stick out past the region: bounds proved over the covering hold
// a fortiori on the region). Cells refine by splitting; every claim below is
// established from per-cell interval enclosures, with point samples used only
// to find refutation witnesses and to tighten upper bounds on minima.
// ---------------------------------------------------------------------------

enum class CellKind { Segment, Arc, Box };

struct CoverCell {
  CellKind kind = CellKind::Segment;
  // Segment
  Pt a, b;
  // Arc: center + radius, angles [t0, t1]
  Pt center;
  double radius = 0.0;
  double t0 = 0.0, t1 = 0.0;
  // Box
  CBox box;

  Pt mid() const {
    switch (kind) {
      case CellKind::Segment:
        return Pt(a.base, a.off + 0.5 * delta(b, a));
      case CellKind::Arc:
        return Pt(center.base, center.off + std::polar(radius, 0.5 * (t0 + t1)));
      default:
        return Pt(cplx(box.re.mid(), box.im.mid()));
    }
  }

  double rad() const {
    switch (kind) {
      case CellKind::Segment:
        return 0.5 * std::abs(delta(b, a));
      case CellKind::Arc: {
        double span = std::min(t1 - t0, 2.0 * kPi);
        return 2.0 * radius * std::sin(0.25 * span);
      }
      default:
        return 0.5 * std::hypot(box.re.width(), box.im.width());
    }
  }

  std::pair<CoverCell, CoverCell> split() const {
    CoverCell l = *this, r = *this;
    switch (kind) {
      case CellKind::Segment: {
        Pt m = mid();
        l.b = m;
        r.a = m;
        break;
      }
      case CellKind::Arc: {
        double tm = 0.5 * (t0 + t1);
        l.t1 = tm;
        r.t0 = tm;
        break;
      }
      default: {
        if (box.re.width() >= box.im.width()) {
          double m = box.re.mid();
          l.box.re = Interval(box.re.lo, m);
          r.box.re = Interval(m, box.re.hi);
        } else {
          double m = box.im.mid();
          l.box.im = Interval(box.im.lo, m);
          r.box.im = Interval(m, box.im.hi);
        }
        break;
      }
    }
    return {l, r};
  }
};

inline CoverCell segment_cell(Pt a, Pt b) {
  CoverCell c;
  c.kind = CellKind::Segment;
  c.a = a;
  c.b = b;
  return c;
}

inline CoverCell arc_cell(Pt center, double radius, double t0, double t1) {
  CoverCell c;
  c.kind = CellKind::Arc;
  c.center = center;
  c.radius = radius;
  c.t0 = t0;
  c.t1 = t1;
  return c;
}

inline CoverCell box_cell(CBox b) {
  CoverCell c;
  c.kind = CellKind::Box;
  c.box = b;
  return c;
}

inline std::vector<CoverCell> cover_segment(Pt a, Pt b, int pieces = 1) {
  std::vector<CoverCell> out;
  cplx step = delta(b, a);
  for (int i = 0; i < pieces; ++i) {
    Pt pa(a.base, a.off + step * ((double)i / pieces));
    Pt pb(a.base, a.off + step * ((double)(i + 1) / pieces));
    if (i == pieces - 1) pb = b;
    out.push_back(segment_cell(pa, pb));
  }
  return out;
}

inline std::vector<CoverCell> cover_arc(Pt center, double radius, double t0, double t1,
                                        int pieces = 1) {
  std::vector<CoverCell> out;
  for (int i = 0; i < pieces; ++i) {
    double u0 = t0 + (t1 - t0) * i / pieces;
    double u1 = t0 + (t1 - t0) * (i + 1) / pieces;
    out.push_back(arc_cell(center, radius, u0, u1));
  }
  return out;
}

inline std::vector<CoverCell> cover_curve(const ParamCurve& c, double max_len) {
  std::vector<CoverCell> out;
  for (std::size_t i = 0; i < c.segments(); ++i) {
    Pt a = c.seg_a(i), b = c.seg_b(i);
    double len = std::abs(delta(b, a));
    int pieces = std::max(1, (int)std::ceil(len / max_len));
    std::vector<CoverCell> part = cover_segment(a, b, pieces);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

// Conservative quadtree cover of an implicit region. Cells straddling the
// boundary are refined to radius <= boundary_pad and kept, so the union
// covers the region and stays inside its boundary_pad-neighborhood.
inline std::vector<CoverCell> cover_region(const ImplicitRegion& r, double boundary_pad) {
  if (boundary_pad <= 0.0) throw CertError("cover_region: boundary_pad must be positive");
  std::vector<CoverCell> out;
  std::vector<CBox> stack{CBox(r.bx, r.by)};
  while (!stack.empty()) {
    CBox b = stack.back();
    stack.pop_back();
    CoverCell cell = box_cell(b);
    double rad = cell.rad();
    double cl = r.clearance(cell.mid().value());
    if (cl >= rad) {
      out.push_back(cell);
      continue;
    }
    if (cl <= -rad) continue;
    if (rad <= boundary_pad) {
      out.push_back(cell);
      continue;
    }
    auto halves = cell.split();
    stack.push_back(halves.first.box);
    stack.push_back(halves.second.box);
  }
  return out;
}

// ---- per-cell enclosures ----

// 0 * [-inf, inf] must stay 0, not NaN
inline Interval iscale(const Interval& x, double s) {
  if (s == 0.0) return Interval(0.0, 0.0);
  return x * s;
}

// interval power for positive bases, padded for accumulated rounding
inline Interval ipow_pos(const Interval& a, int k) {
  Interval r(1.0, 1.0);
  for (int i = 0; i < k; ++i) r = Interval(r.lo * a.lo, r.hi * a.hi);
  return r.expand(1e-13 * std::abs(r.hi) * (1 + k));
}

// absolute-position box of a cell
inline CBox cell_zbox(const CoverCell& c) {
  switch (c.kind) {
    case CellKind::Segment: {
      cplx va = c.a.value(), vb = c.b.value();
      return {Interval::hull(va.real(), vb.real()), Interval::hull(va.imag(), vb.imag())};
    }
    case CellKind::Arc:
      return CBox(c.center.value()) +
             polar_box(Interval(c.radius, c.radius), Interval(c.t0, c.t1));
    default:
      return c.box;
  }
}

// box of z - pole for z in the cell, anchored through delta()
inline CBox cell_wbox(const CoverCell& c, const Pt& pole) {
  switch (c.kind) {
    case CellKind::Segment: {
      cplx wa = delta(c.a, pole), wb = delta(c.b, pole);
      return {Interval::hull(wa.real(), wb.real()), Interval::hull(wa.imag(), wb.imag())};
    }
    case CellKind::Arc:
      return CBox(delta(c.center, pole)) +
             polar_box(Interval(c.radius, c.radius), Interval(c.t0, c.t1));
    default:
      return c.box - CBox(pole.value());
  }
}

inline CBox cbox_huge() {
  return {Interval(-HUGE_VAL, HUGE_VAL), Interval(-HUGE_VAL, HUGE_VAL)};
}

// 1/w for a box excluding the origin
inline CBox cbox_recip(const CBox& w) {
  Interval den = sqr(w.re) + sqr(w.im);
  if (den.lo <= 0.0) return cbox_huge();
  return {w.re / den, -(w.im / den)};
}

// Encloses f over the cell. Arc cells concentric with a pole use the exact
// polar form; everything else goes through box reciprocals. A cell touching
// a pole yields an unbounded box, which the engines treat as "must refine".
inline CBox rf_enclose(const RationalFunction& f, const CoverCell& cell) {
  CBox acc(cplx(0.0, 0.0));
  for (const PoleTerm& t : f.poles) {
    double d0 = cell.kind == CellKind::Arc ? dist(cell.center, t.pole) : HUGE_VAL;
    if (cell.kind == CellKind::Arc && d0 < 1e-9 * cell.radius) {
      Interval mod(cell.radius - d0, cell.radius + d0);
      mod = mod.expand(1e-15 * cell.radius);
      Interval ang(cell.t0, cell.t1);
      for (std::size_t k = 0; k < t.coef.size(); ++k) {
        if (t.coef[k] == cplx(0.0)) continue;
        Interval m = recip(ipow_pos(mod, (int)k + 1));
        acc = acc + t.coef[k] * polar_box(m, iscale(ang, -(double)(k + 1)));
      }
      continue;
    }
    CBox w = cell_wbox(cell, t.pole);
    CBox u = cbox_recip(w);
    if (std::isinf(u.re.hi)) return cbox_huge();
    CBox uk = u;
    for (std::size_t k = 0; k < t.coef.size(); ++k) {
      if (t.coef[k] != cplx(0.0)) acc = acc + t.coef[k] * uk;
      if (k + 1 < t.coef.size()) uk = uk * u;
    }
  }
  if (!f.poly.empty()) {
    CBox z = cell_zbox(cell);
    CBox s(cplx(0.0, 0.0));
    for (std::size_t i = f.poly.size(); i-- > 0;) s = s * z + CBox(f.poly[i]);
    acc = acc + s;
  }
  double mag = std::max(std::max(std::abs(acc.re.lo), std::abs(acc.re.hi)),
                        std::max(std::abs(acc.im.lo), std::abs(acc.im.hi)));
  if (std::isfinite(mag)) {
    acc.re = acc.re.expand(1e-14 * (1.0 + mag));
    acc.im = acc.im.expand(1e-14 * (1.0 + mag));
  }
  return acc;
}

inline CBox hp_enclose(const HarmonicPlaneMap& m, const CoverCell& cell) {
  Interval fx(0.0, 0.0), fy(0.0, 0.0);
  for (const MapTerm& t : m.terms) {
    Interval re = rf_enclose(t.f, cell).re;
    fx = fx + iscale(re, t.dir.x);
    fy = fy + iscale(re, t.dir.y);
  }
  return {fx, fy};
}

inline Interval hp_enclose_norm(const HarmonicPlaneMap& m, const CoverCell& cell) {
  return abs(hp_enclose(m, cell));
}

inline Interval hp_enclose_component(const HarmonicPlaneMap& m, const CoverCell& cell,
                                     const Frame& s, int which) {
  const Vec2& e = which == 1 ? s.e1 : s.e2;
  Interval acc(0.0, 0.0);
  for (const MapTerm& t : m.terms) {
    double w = dot(t.dir, e);
    if (w != 0.0) acc = acc + iscale(rf_enclose(t.f, cell).re, w);
  }
  return acc;
}

// distance to a curve is 1-Lipschitz, so midpoint +- radius encloses it
inline Interval dist_enclose(const CoverCell& cell, const ParamCurve& c) {
  double d = curve_dist(c, cell.mid());
  double r = cell.rad();
  return {std::max(0.0, d - r), d + r};
}

// ---- claim engines ----

using EncloseFn = std::function<Interval(const CoverCell&)>;
using SampleFn = std::function<double(const Pt&)>;

struct CertOptions {
  std::size_t max_cells = 4000000;
  double min_rad = 0.0;
};

struct CertOutcome {
  bool proven = false;
  bool refuted = false;
  bool exhausted = false;
  double certified = 0.0;
  Pt witness;
  double witness_value = 0.0;
  std::size_t cells = 0;
  double worst_rad = 0.0;
};

inline CertOutcome certify_inf_above(const EncloseFn& enclose, const SampleFn& sample,
                                     std::vector<CoverCell> cover, double threshold,
                                     const CertOptions& opt = {}) {
  CertOutcome out;
  out.certified = HUGE_VAL;
  std::vector<CoverCell>& stack = cover;
  while (!stack.empty()) {
    CoverCell cell = stack.back();
    stack.pop_back();
    if (++out.cells > opt.max_cells) {
      out.exhausted = true;
      out.worst_rad = cell.rad();
      out.witness = cell.mid();
      return out;
    }
    if (sample) {
      double v = sample(cell.mid());
      if (v < threshold) {
        out.refuted = true;
        out.witness = cell.mid();
        out.witness_value = v;
        return out;
      }
    }
    Interval e = enclose(cell);
    if (e.lo >= threshold) {
      out.certified = std::min(out.certified, e.lo);
      continue;
    }
    if (e.hi < threshold) {
      out.refuted = true;
      out.witness = cell.mid();
      out.witness_value = e.hi;
      return out;
    }
    if (cell.rad() <= opt.min_rad) {
      out.exhausted = true;
      out.worst_rad = cell.rad();
      out.witness = cell.mid();
      return out;
    }
    auto halves = cell.split();
    stack.push_back(halves.first);
    stack.push_back(halves.second);
  }
  out.proven = true;
  return out;
}

inline CertOutcome certify_sup_below(const EncloseFn& enclose, const SampleFn& sample,
                                     std::vector<CoverCell> cover, double threshold,
                                     const CertOptions& opt = {}) {
  CertOutcome out;
  out.certified = -HUGE_VAL;
  std::vector<CoverCell>& stack = cover;
  while (!stack.empty()) {
    CoverCell cell = stack.back();
    stack.pop_back();
    if (++out.cells > opt.max_cells) {
      out.exhausted = true;
      out.worst_rad = cell.rad();
      out.witness = cell.mid();
      return out;
    }
    if (sample) {
      double v = sample(cell.mid());
      if (v > threshold) {
        out.refuted = true;
        out.witness = cell.mid();
        out.witness_value = v;
        return out;
      }
    }
    Interval e = enclose(cell);
    if (e.hi <= threshold) {
      out.certified = std::max(out.certified, e.hi);
      continue;
    }
    if (e.lo > threshold) {
      out.refuted = true;
      out.witness = cell.mid();
      out.witness_value = e.lo;
      return out;
    }
    if (cell.rad() <= opt.min_rad) {
      out.exhausted = true;
      out.worst_rad = cell.rad();
      out.witness = cell.mid();
      return out;
    }
    auto halves = cell.split();
    stack.push_back(halves.first);
    stack.push_back(halves.second);
  }
  out.proven = true;
  return out;
}

struct MinResult {
  Interval bounds{HUGE_VAL, HUGE_VAL};
  Pt argmin;
  bool exhausted = false;
  std::size_t cells = 0;
};

// Branch-and-bound enclosure of the minimum over the covering. After the cell
// budget is hit, remaining cells fold in unrefined so the result stays sound,
// only wider.
inline MinResult certified_min(const EncloseFn& enclose, const SampleFn& sample,
                               std::vector<CoverCell> cover, double target_width,
                               const CertOptions& opt = {}) {
  MinResult out;
  double best_hi = HUGE_VAL;
  double retired_lo = HUGE_VAL;
  std::vector<CoverCell>& stack = cover;
  while (!stack.empty()) {
    CoverCell cell = stack.back();
    stack.pop_back();
    bool degrade = ++out.cells > opt.max_cells;
    if (degrade) out.exhausted = true;
    Interval e = enclose(cell);
    if (e.hi < best_hi) {
      best_hi = e.hi;
      out.argmin = cell.mid();
    }
    if (sample) {
      double v = sample(cell.mid());
      if (v < best_hi) {
        best_hi = v;
        out.argmin = cell.mid();
      }
    }
    if (e.lo >= best_hi || e.width() <= target_width || degrade ||
        cell.rad() <= opt.min_rad) {
      retired_lo = std::min(retired_lo, e.lo);
      continue;
    }
    auto halves = cell.split();
    stack.push_back(halves.first);
    stack.push_back(halves.second);
  }
  out.bounds = Interval(std::min(retired_lo, best_hi), best_hi);
  return out;
}

inline MinResult certified_max(const EncloseFn& enclose, const SampleFn& sample,
                               std::vector<CoverCell> cover, double target_width,
                               const CertOptions& opt = {}) {
  EncloseFn neg = [&enclose](const CoverCell& c) { return -enclose(c); };
  SampleFn nsample;
  if (sample) nsample = [&sample](const Pt& p) { return -sample(p); };
  MinResult m = certified_min(neg, nsample, std::move(cover), target_width, opt);
  MinResult out = m;
  out.bounds = Interval(-m.bounds.hi, -m.bounds.lo);
  return out;
}

}  // namespace harmap
