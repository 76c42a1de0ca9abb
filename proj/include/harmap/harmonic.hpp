#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "geometry.hpp"
#include "numeric.hpp"
#include "rational.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// Plane harmonic maps as finite sums  F(z) = sum_k Re(f_k(z)) * dir_k  with
// rational f_k. Frames are right-handed orthonormal pairs; building e2 by the
// exact quarter turn keeps frame component arithmetic free of cross terms.
// ---------------------------------------------------------------------------

struct Frame {
  Vec2 e1{1.0, 0.0};
  Vec2 e2{0.0, 1.0};

  static Frame standard() { return Frame{}; }
  static Frame from_e1(Vec2 v) {
    Vec2 u = normalized(v);
    return Frame{u, rot90(u)};
  }
  static Frame from_e2(Vec2 v) {
    Vec2 u = normalized(v);
    return Frame{Vec2{u.y, -u.x}, u};
  }
};

struct MapTerm {
  RationalFunction f;
  Vec2 dir{1.0, 0.0};
};

struct HarmonicPlaneMap {
  std::vector<MapTerm> terms;

  std::size_t scalar_terms() const {
    std::size_t n = 0;
    for (const MapTerm& t : terms) n += t.f.term_count();
    return n;
  }
};

// Identify C with R^2: f rational maps to the plane map z -> (Re f, Im f).
inline HarmonicPlaneMap map_from_rational(const RationalFunction& f) {
  HarmonicPlaneMap m;
  m.terms.push_back(MapTerm{f, Vec2{1.0, 0.0}});
  m.terms.push_back(MapTerm{rf_scale(f, cplx(0.0, -1.0)), Vec2{0.0, 1.0}});
  return m;
}

inline Vec2 hp_eval_raw(const HarmonicPlaneMap& m, const Pt& z) {
  Vec2 acc{0.0, 0.0};
  for (const MapTerm& t : m.terms) acc = acc + t.dir * rf_eval_raw(t.f, z).real();
  return acc;
}

inline Vec2 hp_eval(const HarmonicPlaneMap& m, const Pt& z) {
  for (const MapTerm& t : m.terms)
    for (const PoleTerm& p : t.f.poles)
      if (dist(z, p.pole) < kPoleGuard)
        throw GeomError("harmonic map evaluation within the pole guard distance");
  return hp_eval_raw(m, z);
}

inline double hp_norm(const HarmonicPlaneMap& m, const Pt& z) {
  return hp_eval(m, z).norm();
}

inline double hp_norm_raw(const HarmonicPlaneMap& m, const Pt& z) {
  return hp_eval_raw(m, z).norm();
}

// Frame component of the map value, accumulated term by term so that a term
// directed along e1 contributes exactly zero to the e2 component.
inline double hp_component_raw(const HarmonicPlaneMap& m, const Pt& z, const Frame& s, int which) {
  const Vec2& e = which == 1 ? s.e1 : s.e2;
  double acc = 0.0;
  for (const MapTerm& t : m.terms) acc += rf_eval_raw(t.f, z).real() * dot(t.dir, e);
  return acc;
}

inline double hp_component(const HarmonicPlaneMap& m, const Pt& z, const Frame& s, int which) {
  for (const MapTerm& t : m.terms)
    for (const PoleTerm& p : t.f.poles)
      if (dist(z, p.pole) < kPoleGuard)
        throw GeomError("harmonic map evaluation within the pole guard distance");
  return hp_component_raw(m, z, s, which);
}

// h = F + Re(xi) * e1 as a new term; the second frame component is untouched.
inline HarmonicPlaneMap hp_deform(const HarmonicPlaneMap& m, const Frame& s,
                                  const RationalFunction& xi) {
  HarmonicPlaneMap out = m;
  out.terms.push_back(MapTerm{xi, s.e1});
  return out;
}

inline HarmonicPlaneMap hp_add(const HarmonicPlaneMap& a, const HarmonicPlaneMap& b) {
  HarmonicPlaneMap out = a;
  out.terms.insert(out.terms.end(), b.terms.begin(), b.terms.end());
  return out;
}

inline HarmonicPlaneMap hp_compose_moebius(const HarmonicPlaneMap& m, const Moebius& t) {
  HarmonicPlaneMap out;
  out.terms.reserve(m.terms.size());
  for (const MapTerm& mt : m.terms)
    out.terms.push_back(MapTerm{rf_compose_moebius(mt.f, t), mt.dir});
  return out;
}

inline std::vector<Pt> hp_poles(const HarmonicPlaneMap& m) {
  std::vector<Pt> out;
  for (const MapTerm& t : m.terms)
    for (const PoleTerm& p : t.f.poles) out.push_back(p.pole);
  return out;
}

inline double hp_pole_clearance(const HarmonicPlaneMap& m, const Pt& z) {
  double best = HUGE_VAL;
  for (const MapTerm& t : m.terms)
    for (const PoleTerm& p : t.f.poles) best = std::min(best, dist(z, p.pole));
  return best;
}

// Upper bound for |F| on the closed disk |z - center| <= radius.
inline double hp_sup_bound(const HarmonicPlaneMap& m, cplx center, double radius) {
  double acc = 0.0;
  for (const MapTerm& t : m.terms) acc += t.dir.norm() * rf_sup_bound(t.f, center, radius);
  return acc;
}

// Upper bound for the operator norm of DF on the same disk; also bounds the
// Lipschitz constant of every frame component there.
inline double hp_deriv_sup_bound(const HarmonicPlaneMap& m, cplx center, double radius) {
  double acc = 0.0;
  for (const MapTerm& t : m.terms)
    acc += t.dir.norm() * rf_sup_bound(rf_derivative(t.f), center, radius);
  return acc;
}

}  // namespace harmap
