#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace harmap {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

inline double sq(double x) { return x * x; }

// ---- closed intervals ----
//
// Endpoint arithmetic in plain doubles.  All certified tolerances in this
// library sit many orders of magnitude above machine epsilon relative to the
// operand scales, so directed rounding is not needed; callers that want a
// guard band use expand().

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double v) : lo(v), hi(v) {}
  Interval(double a, double b) : lo(a), hi(b) {}

  static Interval hull(double a, double b) {
    return a <= b ? Interval(a, b) : Interval(b, a);
  }

  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
  bool valid() const { return lo <= hi; }

  Interval expand(double eps) const { return {lo - eps, hi + eps}; }
};

inline Interval operator+(const Interval& a, const Interval& b) {
  return {a.lo + b.lo, a.hi + b.hi};
}
inline Interval operator-(const Interval& a) { return {-a.hi, -a.lo}; }
inline Interval operator-(const Interval& a, const Interval& b) {
  return {a.lo - b.hi, a.hi - b.lo};
}
inline Interval operator*(const Interval& a, const Interval& b) {
  double p1 = a.lo * b.lo, p2 = a.lo * b.hi, p3 = a.hi * b.lo, p4 = a.hi * b.hi;
  return {std::min(std::min(p1, p2), std::min(p3, p4)),
          std::max(std::max(p1, p2), std::max(p3, p4))};
}
inline Interval operator*(double s, const Interval& a) {
  return s >= 0 ? Interval(s * a.lo, s * a.hi) : Interval(s * a.hi, s * a.lo);
}
inline Interval operator*(const Interval& a, double s) { return s * a; }
inline Interval operator+(const Interval& a, double s) { return {a.lo + s, a.hi + s}; }
inline Interval operator+(double s, const Interval& a) { return a + s; }
inline Interval operator-(const Interval& a, double s) { return {a.lo - s, a.hi - s}; }
inline Interval operator-(double s, const Interval& a) { return {s - a.hi, s - a.lo}; }

inline Interval recip(const Interval& a) {
  if (a.lo <= 0.0 && a.hi >= 0.0)
    throw std::domain_error("recip: interval straddles zero");
  return {1.0 / a.hi, 1.0 / a.lo};
}
inline Interval operator/(const Interval& a, const Interval& b) {
  return a * recip(b);
}

inline Interval abs(const Interval& a) {
  if (a.lo >= 0.0) return a;
  if (a.hi <= 0.0) return {-a.hi, -a.lo};
  return {0.0, std::max(-a.lo, a.hi)};
}
inline Interval sqrt(const Interval& a) {
  return {std::sqrt(std::max(0.0, a.lo)), std::sqrt(std::max(0.0, a.hi))};
}
inline Interval sqr(const Interval& a) {
  Interval m = abs(a);
  return {m.lo * m.lo, m.hi * m.hi};
}
inline Interval intersect(const Interval& a, const Interval& b) {
  return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)};
}
inline Interval join(const Interval& a, const Interval& b) {
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

// cos over an angle interval, exact extrema tracking
// Endpoint values carry ~ulp rounding, so the hull is padded outward before
// clamping back to [-1, 1]; interior extrema are joined as exact +-1.
inline Interval cos(const Interval& a) {
  if (a.width() >= 2.0 * kPi) return {-1.0, 1.0};
  Interval r = Interval::hull(std::cos(a.lo), std::cos(a.hi));
  long long k0 = (long long)std::ceil(a.lo / kPi - 1e-9);
  long long k1 = (long long)std::floor(a.hi / kPi + 1e-9);
  for (long long k = k0; k <= k1; ++k)
    r = join(r, Interval((k % 2 == 0) ? 1.0 : -1.0));
  r = r.expand(1e-14 * (1.0 + std::max(std::abs(a.lo), std::abs(a.hi))));
  return intersect(r, Interval(-1.0, 1.0));
}
inline Interval sin(const Interval& a) {
  if (a.width() >= 2.0 * kPi) return {-1.0, 1.0};
  Interval r = Interval::hull(std::sin(a.lo), std::sin(a.hi));
  long long k0 = (long long)std::ceil(a.lo / kPi - 0.5 - 1e-9);
  long long k1 = (long long)std::floor(a.hi / kPi - 0.5 + 1e-9);
  for (long long k = k0; k <= k1; ++k)
    r = join(r, Interval((k % 2 == 0) ? 1.0 : -1.0));
  r = r.expand(1e-14 * (1.0 + std::max(std::abs(a.lo), std::abs(a.hi))));
  return intersect(r, Interval(-1.0, 1.0));
}

// ---- plane vectors ----

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  double norm() const { return std::hypot(x, y); }
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline Vec2 rot90(const Vec2& v) { return {-v.y, v.x}; }
inline Vec2 normalized(const Vec2& v) {
  double n = v.norm();
  if (n == 0.0) throw std::domain_error("normalized: zero vector");
  return {v.x / n, v.y / n};
}

// ---- anchored points ----
//
// A point stored as base + offset.  Differences of two points sharing a
// bit-identical base cancel the base exactly, which keeps tiny geometric
// features (offsets ~1e-11 around anchors ~1) fully resolved.

struct Pt {
  cplx base{0.0, 0.0};
  cplx off{0.0, 0.0};

  Pt() = default;
  explicit Pt(cplx v) : base(v), off(0.0, 0.0) {}
  Pt(cplx b, cplx o) : base(b), off(o) {}

  cplx value() const { return base + off; }
};

inline cplx delta(const Pt& a, const Pt& b) {
  if (a.base.real() == b.base.real() && a.base.imag() == b.base.imag())
    return a.off - b.off;
  return (a.base - b.base) + (a.off - b.off);
}
inline cplx delta(cplx a, const Pt& b) { return (a - b.base) - b.off; }
inline double dist(const Pt& a, const Pt& b) { return std::abs(delta(a, b)); }
inline double dist(cplx a, const Pt& b) { return std::abs(delta(a, b)); }
inline Pt shifted(const Pt& p, cplx d) { return {p.base, p.off + d}; }

// ---- complex boxes ----

struct CBox {
  Interval re;
  Interval im;

  CBox() = default;
  CBox(Interval r, Interval i) : re(r), im(i) {}
  explicit CBox(cplx z) : re(z.real()), im(z.imag()) {}

  bool contains(cplx z) const { return re.contains(z.real()) && im.contains(z.imag()); }
};

inline CBox operator+(const CBox& a, const CBox& b) { return {a.re + b.re, a.im + b.im}; }
inline CBox operator-(const CBox& a, const CBox& b) { return {a.re - b.re, a.im - b.im}; }
inline CBox operator*(const CBox& a, const CBox& b) {
  return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
inline CBox operator*(cplx s, const CBox& a) { return CBox(s) * a; }

inline Interval abs(const CBox& b) {
  double ax_lo = b.re.contains(0.0) ? 0.0 : std::min(std::fabs(b.re.lo), std::fabs(b.re.hi));
  double ay_lo = b.im.contains(0.0) ? 0.0 : std::min(std::fabs(b.im.lo), std::fabs(b.im.hi));
  double ax_hi = std::max(std::fabs(b.re.lo), std::fabs(b.re.hi));
  double ay_hi = std::max(std::fabs(b.im.lo), std::fabs(b.im.hi));
  return {std::hypot(ax_lo, ay_lo), std::hypot(ax_hi, ay_hi)};
}

// box enclosing {m * e^{i t} : m in mod, t in arg}
inline CBox polar_box(const Interval& mod, const Interval& arg) {
  Interval c = cos(arg), s = sin(arg);
  return {mod * c, mod * s};
}

// ---- deterministic rng ----

struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return (next() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
};

}  // namespace harmap
