#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "errors.hpp"
#include "numeric.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// Circline: a closed round disk on the sphere. bounded=true means the set
// {|z-c| <= r}; bounded=false means {|z-c| >= r} together with infinity.
// ---------------------------------------------------------------------------

struct Circline {
  cplx center{0.0, 0.0};
  double radius = 0.0;
  bool bounded = true;
};

inline bool circline_contains(const Circline& d, cplx z, double slack = 0.0) {
  double r = std::abs(z - d.center);
  return d.bounded ? r <= d.radius + slack : r >= d.radius - slack;
}

inline bool circline_interior_contains(const Circline& d, cplx z,
                                       double margin = 0.0) {
  double r = std::abs(z - d.center);
  return d.bounded ? r < d.radius - margin : r > d.radius + margin;
}

// Positive when b lies strictly inside the interior of a; the value is the
// worst-case distance between the boundaries.
inline double disk_nested_gap(const Circline& a, const Circline& b) {
  double cc = std::abs(a.center - b.center);
  if (a.bounded && b.bounded) return a.radius - (cc + b.radius);
  if (!a.bounded && !b.bounded) return b.radius - (cc + a.radius);
  if (a.bounded && !b.bounded) return -1.0;  // b contains infinity, int(a) does not
  return cc - b.radius - a.radius;           // a unbounded, b bounded
}

// true iff b is contained in the interior of a
inline bool disk_nested(const Circline& a, const Circline& b) {
  return disk_nested_gap(a, b) > 0.0;
}

// ---------------------------------------------------------------------------
// Moebius transforms z -> (az+b)/(cz+d)
// ---------------------------------------------------------------------------

struct Moebius {
  cplx a{1.0}, b{0.0}, c{0.0}, d{1.0};

  static Moebius identity() { return Moebius{}; }

  double scale() const {
    return std::max(std::max(std::abs(a), std::abs(b)),
                    std::max(std::abs(c), std::abs(d)));
  }

  void validate() const {
    double s = scale();
    if (!(s > 0.0) || std::abs(a * d - b * c) <= 1e-12 * s * s)
      throw GeomError("moebius transform is degenerate");
  }

  cplx pole() const {  // preimage of infinity; infinity itself when c == 0
    if (c == cplx(0.0)) return cplx(HUGE_VAL, HUGE_VAL);
    return -d / c;
  }

  cplx apply(cplx z) const {
    cplx den = c * z + d;
    if (std::abs(den) == 0.0) throw GeomError("moebius apply hit the pole");
    return (a * z + b) / den;
  }

  cplx apply_infinity() const {
    if (c == cplx(0.0)) throw GeomError("moebius fixes infinity");
    return a / c;
  }

  Moebius inverse() const {
    return Moebius{d, -b, -c, a};
  }

  Moebius compose(const Moebius& g) const {  // (*this)(g(z))
    return Moebius{a * g.a + b * g.c, a * g.b + b * g.d,
                   c * g.a + d * g.c, c * g.b + d * g.d};
  }
};

inline cplx circumcenter(cplx p, cplx q, cplx r) {
  double ax = p.real(), ay = p.imag(), bx = q.real(), by = q.imag(),
         cx = r.real(), cy = r.imag();
  double dd = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
  if (std::abs(dd) < 1e-14 * (std::abs(ax) + std::abs(bx) + std::abs(cx) + 1.0))
    throw GeomError("circumcenter of nearly collinear points");
  double ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) +
               (cx * cx + cy * cy) * (ay - by)) /
              dd;
  double uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) +
               (cx * cx + cy * cy) * (bx - ax)) /
              dd;
  return {ux, uy};
}

// Image of a round disk under a Moebius map. The image must again be a round
// disk (the boundary must stay clear of the pole); otherwise throws.
inline Circline image_circline(const Moebius& t, const Circline& dsk) {
  t.validate();
  if (t.c == cplx(0.0)) {
    cplx f = t.a / t.d;
    Circline out;
    out.center = f * dsk.center + t.b / t.d;
    out.radius = std::abs(f) * dsk.radius;
    out.bounded = dsk.bounded;
    return out;
  }
  cplx pole = t.pole();
  double pd = std::abs(pole - dsk.center);
  if (std::abs(pd - dsk.radius) <= 1e-12 * (dsk.radius + std::abs(pole)))
    throw GeomError("circline image degenerates to a line");
  cplx w0 = t.apply(dsk.center + dsk.radius);
  cplx w1 = t.apply(dsk.center + dsk.radius * cplx(-0.5, std::sqrt(3.0) / 2.0));
  cplx w2 = t.apply(dsk.center + dsk.radius * cplx(-0.5, -std::sqrt(3.0) / 2.0));
  Circline out;
  out.center = circumcenter(w0, w1, w2);
  out.radius = (std::abs(w0 - out.center) + std::abs(w1 - out.center) +
                std::abs(w2 - out.center)) /
               3.0;
  // the image contains infinity exactly when the original set contains the pole
  out.bounded = !circline_contains(dsk, pole);
  return out;
}

// Moebius map sending two strictly nested boundary circles to concentric
// circles about the origin. Both arguments enter through their boundary
// circles only; side flags are ignored here.
inline Moebius make_concentric(const Circline& d1, const Circline& d2) {
  cplx c1 = d1.center, c2 = d2.center;
  double r1 = d1.radius, r2 = d2.radius;
  double dd = std::abs(c2 - c1);
  double sc = r1 + r2 + dd;
  if (dd <= 1e-13 * sc) {
    return Moebius{1.0, -c1, 0.0, 1.0};
  }
  // limit points of the coaxial pencil, on the line through the centers
  cplx u = (c2 - c1) / dd;
  double sum = (r1 * r1 - r2 * r2 + dd * dd) / dd;
  double disc = sum * sum - 4.0 * r1 * r1;
  if (disc <= 0.0)
    throw GeomError("make_concentric: boundary circles intersect");
  double root = std::sqrt(disc);
  double s = (sum - root) / 2.0;
  double tt = (sum + root) / 2.0;
  cplx p = c1 + s * u;   // limit point enclosed by both circles
  cplx q = c1 + tt * u;  // limit point outside both
  Moebius out{1.0, -p, 1.0, -q};
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// ParamCurve: piecewise-linear curve over anchored points
// ---------------------------------------------------------------------------

struct ParamCurve {
  std::vector<Pt> v;
  bool closed = false;

  std::size_t segments() const {
    if (v.size() < 2) return 0;
    return closed ? v.size() : v.size() - 1;
  }
  Pt seg_a(std::size_t i) const { return v[i]; }
  Pt seg_b(std::size_t i) const { return v[(i + 1) % v.size()]; }
};

inline ParamCurve circle_curve(cplx center, double radius, int n) {
  ParamCurve c;
  c.closed = true;
  c.v.reserve(n);
  for (int i = 0; i < n; ++i) {
    double th = 2.0 * kPi * i / n;
    c.v.push_back(Pt(center, radius * cplx(std::cos(th), std::sin(th))));
  }
  return c;
}

inline double curve_length(const ParamCurve& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.segments(); ++i) s += dist(c.seg_a(i), c.seg_b(i));
  return s;
}

inline cplx curve_point_at(const ParamCurve& c, double s) {
  for (std::size_t i = 0; i < c.segments(); ++i) {
    double l = dist(c.seg_a(i), c.seg_b(i));
    if (s <= l || i + 1 == c.segments()) {
      double t = l > 0.0 ? std::min(1.0, std::max(0.0, s / l)) : 0.0;
      return c.seg_a(i).value() + t * delta(c.seg_b(i), c.seg_a(i));
    }
    s -= l;
  }
  return c.v.empty() ? cplx(0.0) : c.v.front().value();
}

inline double seg_dist(cplx p, cplx a, cplx ab) {
  double den = std::norm(ab);
  double t = den > 0.0 ? ((p - a).real() * ab.real() + (p - a).imag() * ab.imag()) / den
                       : 0.0;
  t = std::min(1.0, std::max(0.0, t));
  return std::abs(p - a - t * ab);
}

inline double curve_dist(const ParamCurve& c, cplx p) {
  double best = HUGE_VAL;
  for (std::size_t i = 0; i < c.segments(); ++i) {
    Pt a = c.seg_a(i);
    best = std::min(best, seg_dist(p - a.value(), cplx(0.0), delta(c.seg_b(i), a)));
  }
  return best;
}

inline double curve_dist(const ParamCurve& c, const Pt& p) {
  double best = HUGE_VAL;
  for (std::size_t i = 0; i < c.segments(); ++i) {
    Pt a = c.seg_a(i);
    best = std::min(best, seg_dist(delta(p, a), cplx(0.0), delta(c.seg_b(i), a)));
  }
  return best;
}

inline void curve_bbox(const ParamCurve& c, Interval& bx, Interval& by) {
  bx = Interval(HUGE_VAL, -HUGE_VAL);
  by = Interval(HUGE_VAL, -HUGE_VAL);
  for (const Pt& p : c.v) {
    cplx z = p.value();
    bx.lo = std::min(bx.lo, z.real());
    bx.hi = std::max(bx.hi, z.real());
    by.lo = std::min(by.lo, z.imag());
    by.hi = std::max(by.hi, z.imag());
  }
}

inline int winding_number(const ParamCurve& c, cplx z) {
  int w = 0;
  for (std::size_t i = 0; i < c.segments(); ++i) {
    cplx a = c.seg_a(i).value(), b = c.seg_b(i).value();
    if ((a.imag() > z.imag()) != (b.imag() > z.imag())) {
      double xint =
          a.real() + (z.imag() - a.imag()) * (b.real() - a.real()) / (b.imag() - a.imag());
      if (xint > z.real()) w += (b.imag() > a.imag()) ? 1 : -1;
    }
  }
  return w;
}

inline double curve_signed_area(const ParamCurve& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.segments(); ++i) {
    cplx a = c.seg_a(i).value(), b = c.seg_b(i).value();
    s += a.real() * b.imag() - b.real() * a.imag();
  }
  return 0.5 * s;
}

namespace detail {

inline int orient(cplx a, cplx b, cplx c) {
  double v = (b.real() - a.real()) * (c.imag() - a.imag()) -
             (b.imag() - a.imag()) * (c.real() - a.real());
  if (v > 0.0) return 1;
  if (v < 0.0) return -1;
  return 0;
}

inline bool seg_intersect_proper(cplx p1, cplx p2, cplx p3, cplx p4) {
  int o1 = orient(p1, p2, p3), o2 = orient(p1, p2, p4);
  int o3 = orient(p3, p4, p1), o4 = orient(p3, p4, p2);
  if (o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0) return true;
  auto on_seg_strict = [](cplx a, cplx b, cplx q) {
    if (detail::orient(a, b, q) != 0) return false;
    double lo, hi, tq;
    if (std::abs(b.real() - a.real()) >= std::abs(b.imag() - a.imag())) {
      lo = std::min(a.real(), b.real());
      hi = std::max(a.real(), b.real());
      tq = q.real();
    } else {
      lo = std::min(a.imag(), b.imag());
      hi = std::max(a.imag(), b.imag());
      tq = q.imag();
    }
    return tq > lo && tq < hi;
  };
  if (on_seg_strict(p1, p2, p3) || on_seg_strict(p1, p2, p4) ||
      on_seg_strict(p3, p4, p1) || on_seg_strict(p3, p4, p2))
    return true;
  return false;
}

}  // namespace detail

// Structural validation: vertices pairwise distinct along the curve, closed
// curves need at least three vertices, and no two non-adjacent segments may
// cross. The crossing scan sweeps by x so near-linear inputs stay fast.
inline void validate_curve(const ParamCurve& c) {
  if (c.v.size() < 2) throw GeomError("curve needs at least two vertices");
  if (c.closed && c.v.size() < 3) throw GeomError("closed curve needs at least three vertices");
  std::size_t ns = c.segments();
  for (std::size_t i = 0; i < ns; ++i) {
    if (dist(c.seg_a(i), c.seg_b(i)) <= 0.0) {
      std::ostringstream os;
      os << "curve has a degenerate segment at index " << i;
      throw GeomError(os.str());
    }
  }
  struct SegRec {
    double x0, x1;
    std::size_t idx;
  };
  std::vector<SegRec> recs(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    cplx a = c.seg_a(i).value(), b = c.seg_b(i).value();
    recs[i] = {std::min(a.real(), b.real()), std::max(a.real(), b.real()), i};
  }
  std::sort(recs.begin(), recs.end(),
            [](const SegRec& l, const SegRec& r) { return l.x0 < r.x0; });
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < ns; ++k) {
    const SegRec& cur = recs[k];
    std::vector<std::size_t> keep;
    keep.reserve(active.size());
    for (std::size_t ai : active)
      if (recs[ai].x1 >= cur.x0) keep.push_back(ai);
    active.swap(keep);
    for (std::size_t ai : active) {
      std::size_t i = recs[ai].idx, j = cur.idx;
      std::size_t lo = std::min(i, j), hi = std::max(i, j);
      bool adjacent = (hi == lo + 1) || (c.closed && lo == 0 && hi == ns - 1);
      if (adjacent) continue;
      if (detail::seg_intersect_proper(c.seg_a(i).value(), c.seg_b(i).value(),
                                       c.seg_a(j).value(), c.seg_b(j).value())) {
        std::ostringstream os;
        os << "curve self-intersects between segments " << i << " and " << j;
        throw GeomError(os.str());
      }
    }
    active.push_back(k);
  }
}

// ---------------------------------------------------------------------------
// Region: polygonal region with holes
// ---------------------------------------------------------------------------

struct Region {
  ParamCurve outer;
  std::vector<ParamCurve> holes;
};

inline bool region_contains(const Region& r, cplx z) {
  if (winding_number(r.outer, z) == 0) return false;
  for (const ParamCurve& h : r.holes)
    if (winding_number(h, z) != 0) return false;
  return true;
}

inline double region_boundary_dist(const Region& r, cplx z) {
  double best = curve_dist(r.outer, z);
  for (const ParamCurve& h : r.holes) best = std::min(best, curve_dist(h, z));
  return best;
}

inline void region_bbox(const Region& r, Interval& bx, Interval& by) {
  curve_bbox(r.outer, bx, by);
}

// ---------------------------------------------------------------------------
// ImplicitRegion: membership with a conservative clearance value. clearance(z)
// is >= 0 inside and < 0 outside; |clearance(z)| is a lower bound on the
// distance from z to the region's boundary.
// ---------------------------------------------------------------------------

struct ImplicitRegion {
  std::function<double(cplx)> clearance;
  Interval bx, by;
};

inline ImplicitRegion region_from_circline(const Circline& d) {
  ImplicitRegion r;
  cplx c = d.center;
  double rad = d.radius;
  bool bounded = d.bounded;
  r.clearance = [c, rad, bounded](cplx z) {
    double t = std::abs(z - c);
    return bounded ? rad - t : t - rad;
  };
  if (d.bounded) {
    r.bx = Interval(c.real() - rad, c.real() + rad);
    r.by = Interval(c.imag() - rad, c.imag() + rad);
  } else {
    r.bx = Interval(-HUGE_VAL, HUGE_VAL);
    r.by = Interval(-HUGE_VAL, HUGE_VAL);
  }
  return r;
}

inline ImplicitRegion region_from_polygon(const Region& poly) {
  ImplicitRegion r;
  auto shared = std::make_shared<Region>(poly);
  r.clearance = [shared](cplx z) {
    double d = region_boundary_dist(*shared, z);
    return region_contains(*shared, z) ? d : -d;
  };
  region_bbox(poly, r.bx, r.by);
  return r;
}

inline ImplicitRegion region_intersect(ImplicitRegion a, ImplicitRegion b) {
  ImplicitRegion r;
  auto fa = a.clearance, fb = b.clearance;
  r.clearance = [fa, fb](cplx z) { return std::min(fa(z), fb(z)); };
  r.bx = Interval(std::max(a.bx.lo, b.bx.lo), std::min(a.bx.hi, b.bx.hi));
  r.by = Interval(std::max(a.by.lo, b.by.lo), std::min(a.by.hi, b.by.hi));
  return r;
}

inline ImplicitRegion region_union(ImplicitRegion a, ImplicitRegion b) {
  ImplicitRegion r;
  auto fa = a.clearance, fb = b.clearance;
  r.clearance = [fa, fb](cplx z) { return std::max(fa(z), fb(z)); };
  r.bx = Interval(std::min(a.bx.lo, b.bx.lo), std::max(a.bx.hi, b.bx.hi));
  r.by = Interval(std::min(a.by.lo, b.by.lo), std::max(a.by.hi, b.by.hi));
  return r;
}

inline ImplicitRegion region_complement(ImplicitRegion a) {
  ImplicitRegion r;
  auto fa = a.clearance;
  r.clearance = [fa](cplx z) { return -fa(z); };
  r.bx = Interval(-HUGE_VAL, HUGE_VAL);
  r.by = Interval(-HUGE_VAL, HUGE_VAL);
  return r;
}

// ---------------------------------------------------------------------------
// Marching squares over a scalar sampler
// ---------------------------------------------------------------------------

struct MarchStats {
  std::size_t nodes = 0;
  std::size_t cells_crossed = 0;
  std::size_t loops = 0;
  std::size_t open_chains = 0;
  double value_min = HUGE_VAL;
  double value_max = -HUGE_VAL;
};

namespace detail {

struct EdgeKey {
  int64_t x, y;
  int dir;  // 0: horizontal edge starting at (x,y); 1: vertical
  bool operator==(const EdgeKey& o) const {
    return x == o.x && y == o.y && dir == o.dir;
  }
};

struct EdgeKeyHash {
  std::size_t operator()(const EdgeKey& k) const {
    std::uint64_t h = (std::uint64_t)k.x * 0x9e3779b97f4a7c15ull;
    h ^= (std::uint64_t)k.y + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= (std::uint64_t)k.dir + (h << 3);
    return (std::size_t)h;
  }
};

}  // namespace detail

// Extracts all level-set loops of (sampler - level) on a uniform grid.
// Nodes where mask() is false are skipped; cells touching a skipped node are
// ignored. Returns closed loops as vertex lists.
inline std::vector<std::vector<cplx>> march_level(
    const std::function<double(cplx)>& sampler, double level, Interval bx,
    Interval by, double h, const std::function<bool(cplx)>& mask,
    MarchStats* stats = nullptr) {
  if (!(h > 0.0)) throw GeomError("march_level: grid step must be positive");
  int nx = (int)std::ceil(bx.width() / h) + 1;
  int ny = (int)std::ceil(by.width() / h) + 1;
  if ((double)nx * (double)ny > 64e6)
    throw GeomError("march_level: grid too large");
  std::vector<double> val((std::size_t)nx * ny, std::nan(""));
  auto node = [&](int i, int j) { return cplx(bx.lo + i * h, by.lo + j * h); };
  MarchStats local;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      cplx z = node(i, j);
      if (mask && !mask(z)) continue;
      double f = sampler(z);
      val[(std::size_t)j * nx + i] = f;
      ++local.nodes;
      local.value_min = std::min(local.value_min, f);
      local.value_max = std::max(local.value_max, f);
    }
  auto v = [&](int i, int j) { return val[(std::size_t)j * nx + i]; };

  // segment soup keyed by interpolated edge points
  using detail::EdgeKey;
  auto edge_point = [&](const EdgeKey& e) {
    cplx a = node((int)e.x, (int)e.y);
    cplx b = e.dir == 0 ? node((int)e.x + 1, (int)e.y) : node((int)e.x, (int)e.y + 1);
    double fa = v((int)e.x, (int)e.y);
    double fb = e.dir == 0 ? v((int)e.x + 1, (int)e.y) : v((int)e.x, (int)e.y + 1);
    double t = (level - fa) / (fb - fa);
    t = std::min(1.0, std::max(0.0, t));
    return a + t * (b - a);
  };
  std::unordered_map<EdgeKey, std::vector<EdgeKey>, detail::EdgeKeyHash> adj;
  auto link = [&](const EdgeKey& a, const EdgeKey& b) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  };
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      double f00 = v(i, j), f10 = v(i + 1, j), f11 = v(i + 1, j + 1), f01 = v(i, j + 1);
      if (std::isnan(f00) || std::isnan(f10) || std::isnan(f11) || std::isnan(f01))
        continue;
      int cse = (f00 >= level ? 1 : 0) | (f10 >= level ? 2 : 0) |
                (f11 >= level ? 4 : 0) | (f01 >= level ? 8 : 0);
      if (cse == 0 || cse == 15) continue;
      ++local.cells_crossed;
      EdgeKey bottom{i, j, 0}, right{i + 1, j, 1}, top{i, j + 1, 0}, left{i, j, 1};
      auto emit = [&](EdgeKey a, EdgeKey b) { link(a, b); };
      switch (cse) {
        case 1: case 14: emit(left, bottom); break;
        case 2: case 13: emit(bottom, right); break;
        case 3: case 12: emit(left, right); break;
        case 4: case 11: emit(right, top); break;
        case 6: case 9: emit(bottom, top); break;
        case 7: case 8: emit(left, top); break;
        case 5: case 10: {
          double fc = sampler(node(i, j) + cplx(h / 2.0, h / 2.0));
          bool center_hi = fc >= level;
          if ((cse == 5) == center_hi) {
            emit(left, top);
            emit(bottom, right);
          } else {
            emit(left, bottom);
            emit(right, top);
          }
          break;
        }
        default: break;
      }
    }

  std::vector<std::vector<cplx>> loops;
  std::unordered_map<EdgeKey, bool, detail::EdgeKeyHash> used;
  for (auto& kv : adj) {
    if (used[kv.first]) continue;
    if (kv.second.size() != 2) {
      used[kv.first] = true;
      ++local.open_chains;
      continue;
    }
    std::vector<EdgeKey> chain;
    EdgeKey cur = kv.first;
    EdgeKey prev = cur;
    bool closed = false;
    while (true) {
      used[cur] = true;
      chain.push_back(cur);
      auto it = adj.find(cur);
      if (it == adj.end() || it->second.size() != 2) break;
      EdgeKey nxt = it->second[0];
      if (chain.size() > 1 && nxt == prev) nxt = it->second[1];
      else if (chain.size() == 1) nxt = it->second[0];
      if (nxt == kv.first) {
        closed = true;
        break;
      }
      if (used[nxt]) break;
      prev = cur;
      cur = nxt;
    }
    if (closed && chain.size() >= 3) {
      std::vector<cplx> loop;
      loop.reserve(chain.size());
      for (const EdgeKey& e : chain) loop.push_back(edge_point(e));
      loops.push_back(std::move(loop));
      ++local.loops;
    } else {
      ++local.open_chains;
    }
  }
  if (stats) *stats = local;
  return loops;
}

// ---------------------------------------------------------------------------
// offset_region: closed neighborhood of a curve at distance L, clipped checks
// against an ambient region
// ---------------------------------------------------------------------------

inline Region offset_region(const ParamCurve& q, double L, const Region& ambient) {
  if (!(L > 0.0)) throw GeomError("offset_region: width must be positive");
  if (q.segments() == 0) throw GeomError("offset_region: empty curve");
  Interval bx, by;
  curve_bbox(q, bx, by);
  bx = bx.expand(2.0 * L);
  by = by.expand(2.0 * L);
  double h = L / 128.0;
  auto sampler = [&](cplx z) { return curve_dist(q, z); };
  auto loops = march_level(sampler, L, bx, by, h, nullptr, nullptr);
  if (loops.empty()) throw GeomError("offset_region: no boundary found");
  // largest loop by absolute area is the outer boundary, the rest are holes
  std::size_t best = 0;
  double best_area = -1.0;
  std::vector<ParamCurve> curves;
  curves.reserve(loops.size());
  for (auto& l : loops) {
    ParamCurve c;
    c.closed = true;
    c.v.reserve(l.size());
    for (cplx z : l) c.v.push_back(Pt(z));
    curves.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < curves.size(); ++i) {
    double a = std::abs(curve_signed_area(curves[i]));
    if (a > best_area) {
      best_area = a;
      best = i;
    }
  }
  Region out;
  out.outer = curves[best];
  for (std::size_t i = 0; i < curves.size(); ++i)
    if (i != best) out.holes.push_back(curves[i]);
  for (const Pt& p : out.outer.v) {
    if (!region_contains(ambient, p.value())) {
      std::ostringstream os;
      cplx z = p.value();
      os << "offset_region escapes the ambient region near (" << z.real() << ", "
         << z.imag() << ")";
      throw GeomError(os.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// extract_level_contour: separating level curve inside a search region
// ---------------------------------------------------------------------------

struct LevelStats {
  MarchStats march;
  std::size_t separating = 0;
  double mean_dev = 0.0;
};

inline ParamCurve extract_level_contour(const std::function<double(cplx)>& field,
                                        double value, const Region& search,
                                        double resolution,
                                        LevelStats* stats = nullptr) {
  if (!(resolution > 0.0))
    throw GeomError("extract_level_contour: resolution must be positive");
  if (search.holes.empty())
    throw GeomError("extract_level_contour: search region needs an inner boundary");

  auto boundary_extremes = [&](const ParamCurve& c, double& lo, double& hi) {
    lo = HUGE_VAL;
    hi = -HUGE_VAL;
    double len = curve_length(c);
    int m = 256;
    for (int i = 0; i < m; ++i) {
      double f = field(curve_point_at(c, len * i / m));
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
  };
  double olo, ohi, ilo, ihi;
  boundary_extremes(search.outer, olo, ohi);
  boundary_extremes(search.holes.front(), ilo, ihi);
  bool inner_high = ilo > value && ohi < value;
  bool outer_high = olo > value && ihi < value;
  if (!inner_high && !outer_high) {
    std::ostringstream os;
    os << "extract_level_contour: value " << value
       << " does not separate the boundaries (outer range [" << olo << ", " << ohi
       << "], inner range [" << ilo << ", " << ihi << "])";
    throw GeomError(os.str());
  }

  Interval bx, by;
  region_bbox(search, bx, by);
  bx = bx.expand(2.0 * resolution);
  by = by.expand(2.0 * resolution);

  // coarse membership raster so the fine marching grid avoids per-node
  // winding tests; dilated by one coarse cell, which only over-includes
  const int cg = 192;
  double cw = bx.width() / cg, ch = by.width() / cg;
  std::vector<char> coarse((std::size_t)(cg + 2) * (cg + 2), 0);
  for (int j = 0; j < cg; ++j)
    for (int i = 0; i < cg; ++i) {
      cplx z(bx.lo + (i + 0.5) * cw, by.lo + (j + 0.5) * ch);
      if (region_contains(search, z))
        coarse[(std::size_t)(j + 1) * (cg + 2) + (i + 1)] = 1;
    }
  auto mask = [&](cplx z) {
    int i = (int)std::floor((z.real() - bx.lo) / cw);
    int j = (int)std::floor((z.imag() - by.lo) / ch);
    if (i < -1 || j < -1 || i > cg || j > cg) return false;
    for (int dj = 0; dj <= 2; ++dj)
      for (int di = 0; di <= 2; ++di) {
        int ii = i + di, jj = j + dj;
        if (ii < 0 || jj < 0 || ii > cg + 1 || jj > cg + 1) continue;
        if (coarse[(std::size_t)jj * (cg + 2) + ii]) return true;
      }
    return false;
  };
  LevelStats local;
  auto loops = march_level(field, value, bx, by, resolution, mask, &local.march);

  // witness point inside the hole (outside the region)
  cplx wit(0.0, 0.0);
  {
    const ParamCurve& hole = search.holes.front();
    cplx acc(0.0, 0.0);
    for (const Pt& p : hole.v) acc += p.value();
    wit = acc / (double)hole.v.size();
  }

  std::vector<ParamCurve> cands;
  for (auto& l : loops) {
    ParamCurve c;
    c.closed = true;
    for (cplx z : l) c.v.push_back(Pt(z));
    if (c.v.size() < 3) continue;
    if (std::abs(winding_number(c, wit)) == 1) cands.push_back(std::move(c));
  }
  local.separating = cands.size();
  if (cands.empty()) {
    std::ostringstream os;
    os << "extract_level_contour: no separating loop at value " << value << " ("
       << local.march.cells_crossed << " cells crossed, " << local.march.loops
       << " loops, field range [" << local.march.value_min << ", "
       << local.march.value_max << "])";
    throw GeomError(os.str());
  }
  std::size_t best = 0;
  double best_dev = HUGE_VAL;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    double dev = 0.0;
    for (const Pt& p : cands[i].v) dev += std::abs(field(p.value()) - value);
    dev /= (double)cands[i].v.size();
    if (dev < best_dev - 1e-15 ||
        (std::abs(dev - best_dev) <= 1e-15 && cands[i].v.size() < cands[best].v.size())) {
      best_dev = dev;
      best = i;
    }
  }
  local.mean_dev = best_dev;
  if (stats) *stats = local;
  return cands[best];
}

// ---------------------------------------------------------------------------
// trace_level_curve: adaptive predictor-corrector tracer for smooth fields
// with an analytic gradient. Used where a uniform marching grid would be
// hopeless because the field has boundary layers.
// ---------------------------------------------------------------------------

struct TraceField {
  std::function<double(cplx)> value;
  std::function<cplx(cplx)> grad;  // gradient of the scalar field
};

struct TraceOptions {
  double residual_tol = 0.0;   // max |field - level| kept along the way
  double step_min = 0.0;
  double step_max = 0.0;
  double value_step = 0.0;     // target field change per step used to size steps
  std::size_t max_steps = 2000000;
};

inline ParamCurve trace_level_curve(const TraceField& f, double level, cplx seed,
                                    const TraceOptions& opt) {
  auto correct = [&](cplx z, bool& ok) {
    ok = false;
    for (int it = 0; it < 12; ++it) {
      double val = f.value(z) - level;
      if (std::abs(val) <= opt.residual_tol) {
        ok = true;
        return z;
      }
      cplx g = f.grad(z);
      double gn = std::norm(g);
      if (!(gn > 0.0)) return z;
      z -= val * g / gn;
    }
    double val = f.value(z) - level;
    ok = std::abs(val) <= opt.residual_tol;
    return z;
  };

  bool ok = false;
  cplx z = correct(seed, ok);
  if (!ok) throw GeomError("trace_level_curve: seed failed to converge onto the level");
  cplx start = z;
  ParamCurve out;
  out.closed = true;
  out.v.push_back(Pt(z));
  cplx g0 = f.grad(z);
  if (!(std::abs(g0) > 0.0)) throw GeomError("trace_level_curve: zero gradient at seed");

  for (std::size_t step = 0; step < opt.max_steps; ++step) {
    cplx g = f.grad(z);
    double gn = std::abs(g);
    if (!(gn > 0.0)) throw GeomError("trace_level_curve: zero gradient on curve");
    double h = std::min(opt.step_max, std::max(opt.step_min, opt.value_step / gn));
    cplx tangent = cplx(-g.imag(), g.real()) / gn;
    bool corrected = false;
    cplx znext;
    while (true) {
      znext = correct(z + h * tangent, corrected);
      if (corrected) break;
      h *= 0.5;
      if (h < opt.step_min * 0.5)
        throw GeomError("trace_level_curve: corrector failed below minimum step");
    }
    z = znext;
    if (out.v.size() >= 8 && std::abs(z - start) <= 1.5 * h) {
      return out;  // closed back onto the start
    }
    out.v.push_back(Pt(z));
  }
  throw GeomError("trace_level_curve: step limit exceeded before closing the loop");
}

}  // namespace harmap
