#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "numeric.hpp"

namespace harmap {

// ---------------------------------------------------------------------------
// RationalFunction: finite sum of pole terms plus a polynomial tail.
//   f(z) = sum_p sum_k coef[k] / (z - p)^(k+1)  +  sum_i poly[i] z^i
// Pole locations are anchored points so differences against nearby evaluation
// points stay exact.
// ---------------------------------------------------------------------------

struct PoleTerm {
  Pt pole;
  std::vector<cplx> coef;  // coef[k] multiplies (z - pole)^-(k+1)
};

struct RationalFunction {
  std::vector<PoleTerm> poles;
  std::vector<cplx> poly;  // poly[i] multiplies z^i

  bool empty() const { return poles.empty() && poly.empty(); }
  std::size_t term_count() const {
    std::size_t n = poly.size();
    for (const PoleTerm& t : poles) n += t.coef.size();
    return n;
  }
};

inline RationalFunction rf_constant(cplx c) {
  RationalFunction f;
  f.poly = {c};
  return f;
}

inline RationalFunction rf_affine(cplx a, cplx b) {  // a + b z
  RationalFunction f;
  f.poly = {a, b};
  return f;
}

inline RationalFunction rf_simple_pole(Pt p, cplx residue) {
  RationalFunction f;
  f.poles.push_back(PoleTerm{p, {residue}});
  return f;
}

constexpr double kPoleGuard = 1e-9;

// Unguarded evaluation; callers working at sub-guard scales use this with
// anchored points so (z - pole) keeps full precision.
inline cplx rf_eval_raw(const RationalFunction& f, const Pt& z) {
  cplx acc(0.0, 0.0);
  for (const PoleTerm& t : f.poles) {
    cplx u = 1.0 / delta(z, t.pole);
    cplx s(0.0, 0.0);
    for (std::size_t k = t.coef.size(); k-- > 0;) s = (s + t.coef[k]) * u;
    acc += s;
  }
  if (!f.poly.empty()) {
    cplx zv = z.value();
    cplx s(0.0, 0.0);
    for (std::size_t i = f.poly.size(); i-- > 0;) s = s * zv + f.poly[i];
    acc += s;
  }
  return acc;
}

inline cplx rf_eval(const RationalFunction& f, const Pt& z) {
  for (const PoleTerm& t : f.poles)
    if (dist(z, t.pole) < kPoleGuard)
      throw GeomError("rational evaluation within the pole guard distance");
  return rf_eval_raw(f, z);
}

inline RationalFunction rf_derivative(const RationalFunction& f) {
  RationalFunction d;
  d.poles.reserve(f.poles.size());
  for (const PoleTerm& t : f.poles) {
    PoleTerm s;
    s.pole = t.pole;
    s.coef.assign(t.coef.size() + 1, cplx(0.0, 0.0));
    for (std::size_t k = 0; k < t.coef.size(); ++k)
      s.coef[k + 1] = -(double)(k + 1) * t.coef[k];
    d.poles.push_back(std::move(s));
  }
  if (f.poly.size() > 1) {
    d.poly.resize(f.poly.size() - 1);
    for (std::size_t i = 1; i < f.poly.size(); ++i)
      d.poly[i - 1] = (double)i * f.poly[i];
  }
  return d;
}

inline RationalFunction rf_add(const RationalFunction& a, const RationalFunction& b) {
  RationalFunction r = a;
  r.poles.insert(r.poles.end(), b.poles.begin(), b.poles.end());
  if (b.poly.size() > r.poly.size()) r.poly.resize(b.poly.size(), cplx(0.0, 0.0));
  for (std::size_t i = 0; i < b.poly.size(); ++i) r.poly[i] += b.poly[i];
  return r;
}

inline RationalFunction rf_scale(const RationalFunction& a, cplx s) {
  RationalFunction r = a;
  for (PoleTerm& t : r.poles)
    for (cplx& c : t.coef) c *= s;
  for (cplx& c : r.poly) c *= s;
  return r;
}

namespace detail {

inline double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (double)(n - k + i) / (double)i;
  return r;
}

}  // namespace detail

// Exact pullback f(T(z)) of a rational function under a Moebius map. Every
// pole term re-expands around the preimage of its pole; the polynomial part
// becomes pole terms at the preimage of infinity.
inline RationalFunction rf_compose_moebius(const RationalFunction& f, const Moebius& t) {
  t.validate();
  RationalFunction out;
  const cplx ma = t.a, mb = t.b, mc = t.c, md = t.d;

  for (const PoleTerm& term : f.poles) {
    cplx p = term.pole.value();
    cplx den = ma - p * mc;
    int maxk = (int)term.coef.size();
    if (std::abs(den) <= 1e-14 * (std::abs(ma) + std::abs(p * mc) + 1e-300)) {
      // pole sits at T(infinity): w - p is proportional to 1/(cz+d) and the
      // term becomes a polynomial in z
      cplx base = mb - p * md;
      if (std::abs(base) == 0.0) throw GeomError("compose_moebius: pole fixed by map");
      for (int k = 1; k <= maxk; ++k) {
        cplx c = term.coef[k - 1];
        if (c == cplx(0.0)) continue;
        // c * (cz+d)^k / base^k
        cplx invb = 1.0;
        for (int i = 0; i < k; ++i) invb /= base;
        if (out.poly.size() < (std::size_t)k + 1) out.poly.resize(k + 1, cplx(0.0));
        for (int i = 0; i <= k; ++i) {
          cplx pc = c * invb * detail::binom(k, i);
          for (int j = 0; j < i; ++j) pc *= mc;
          for (int j = 0; j < k - i; ++j) pc *= md;
          out.poly[i] += pc;
        }
      }
      continue;
    }
    cplx q = -(mb - p * md) / den;  // preimage of the pole
    cplx cqd = mc * q + md;
    PoleTerm nt;
    nt.pole = Pt(q);
    nt.coef.assign(maxk, cplx(0.0, 0.0));
    for (int k = 1; k <= maxk; ++k) {
      cplx c = term.coef[k - 1];
      if (c == cplx(0.0)) continue;
      cplx invden = 1.0;
      for (int i = 0; i < k; ++i) invden /= den;
      // c (cz+d)^k / (den^k (z-q)^k), expand (cz+d)^k about z = q
      for (int i = 0; i <= k; ++i) {
        cplx pc = c * invden * detail::binom(k, i);
        for (int j = 0; j < i; ++j) pc *= mc;
        for (int j = 0; j < k - i; ++j) pc *= cqd;
        if (i == k) {
          if (out.poly.empty()) out.poly.resize(1, cplx(0.0));
          out.poly[0] += pc;
        } else {
          nt.coef[k - i - 1] += pc;
        }
      }
    }
    bool nonzero = false;
    for (cplx c : nt.coef) nonzero = nonzero || c != cplx(0.0);
    if (nonzero) out.poles.push_back(std::move(nt));
  }

  if (!f.poly.empty()) {
    if (mc == cplx(0.0)) {
      // affine map: substitute directly
      cplx a0 = mb / md, a1 = ma / md;
      std::vector<cplx> acc(1, cplx(0.0));
      // Horner: p(w) with w = a0 + a1 z
      std::vector<cplx> res(1, cplx(0.0));
      for (std::size_t i = f.poly.size(); i-- > 0;) {
        // res = res * (a0 + a1 z) + poly[i]
        std::vector<cplx> nr(res.size() + 1, cplx(0.0));
        for (std::size_t j = 0; j < res.size(); ++j) {
          nr[j] += res[j] * a0;
          nr[j + 1] += res[j] * a1;
        }
        nr[0] += f.poly[i];
        res.swap(nr);
      }
      while (res.size() > 1 && res.back() == cplx(0.0)) res.pop_back();
      if (out.poly.size() < res.size()) out.poly.resize(res.size(), cplx(0.0));
      for (std::size_t i = 0; i < res.size(); ++i) out.poly[i] += res[i];
    } else {
      // w = a/c + e/(z - zp), poles of w-powers pile up at zp = -d/c
      cplx zp = -md / mc;
      cplx e = (mb * mc - ma * md) / (mc * mc);
      cplx w0 = ma / mc;
      PoleTerm nt;
      nt.pole = Pt(zp);
      nt.coef.assign(f.poly.size() > 1 ? f.poly.size() - 1 : 0, cplx(0.0));
      cplx c0(0.0, 0.0);
      for (std::size_t m = 0; m < f.poly.size(); ++m) {
        cplx am = f.poly[m];
        if (am == cplx(0.0)) continue;
        for (std::size_t i = 0; i <= m; ++i) {
          cplx pc = am * detail::binom((int)m, (int)i);
          for (std::size_t j = 0; j < m - i; ++j) pc *= w0;
          for (std::size_t j = 0; j < i; ++j) pc *= e;
          if (i == 0)
            c0 += pc;
          else
            nt.coef[i - 1] += pc;
        }
      }
      if (c0 != cplx(0.0)) {
        if (out.poly.empty()) out.poly.resize(1, cplx(0.0));
        out.poly[0] += c0;
      }
      bool nonzero = false;
      for (cplx c : nt.coef) nonzero = nonzero || c != cplx(0.0);
      if (nonzero) out.poles.push_back(std::move(nt));
    }
  }
  return out;
}

// Upper bound for |f| on the closed disk |z - center| <= radius, by the
// triangle inequality per term. Returns +inf when a pole intrudes.
inline double rf_sup_bound(const RationalFunction& f, cplx center, double radius) {
  double acc = 0.0;
  for (const PoleTerm& t : f.poles) {
    double d = std::abs(center - t.pole.value()) - radius;
    if (d <= 0.0) return HUGE_VAL;
    double dk = d;
    for (std::size_t k = 0; k < t.coef.size(); ++k) {
      acc += std::abs(t.coef[k]) / dk;
      dk *= d;
    }
  }
  double m = std::abs(center) + radius;
  double mp = 1.0;
  for (std::size_t i = 0; i < f.poly.size(); ++i) {
    acc += std::abs(f.poly[i]) * mp;
    mp *= m;
  }
  return acc;
}

}  // namespace harmap
