#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "harmap/geometry.hpp"

using namespace harmap;

namespace {

Circline disk(double cx, double cy, double r, bool bounded = true) {
  return Circline{cplx(cx, cy), r, bounded};
}

}  // namespace

TEST(Interval, ArithmeticKeepsTrueValues) {
  SplitMix64 rng{0x1234u};
  for (int round = 0; round < 1000; ++round) {
    double a = rng.uniform(-3.0, 3.0), b = rng.uniform(-3.0, 3.0);
    Interval x(std::min(a, b), std::max(a, b));
    double t = rng.uniform(x.lo, x.hi);
    Interval y = x + Interval(1.5, 2.0);
    double ty = t + rng.uniform(1.5, 2.0);
    EXPECT_TRUE(y.contains(ty));
    Interval z = y * y;
    EXPECT_TRUE(z.contains(ty * ty));
    Interval w = abs(z + Interval(0.5));
    EXPECT_TRUE(w.contains(std::abs(ty * ty + 0.5)));
    Interval r = recip(w + Interval(0.25));
    EXPECT_TRUE(r.contains(1.0 / (std::abs(ty * ty + 0.5) + 0.25)));
  }
}

TEST(Interval, TrigTracksExtrema) {
  SplitMix64 rng{77u};
  for (int round = 0; round < 400; ++round) {
    double a = rng.uniform(-10.0, 10.0);
    double w = rng.uniform(0.0, 5.0);
    Interval th(a, a + w);
    Interval c = cos(th), s = sin(th);
    for (int i = 0; i <= 32; ++i) {
      double t = a + w * i / 32.0;
      EXPECT_TRUE(c.contains(std::cos(t))) << "cos escaped at " << t;
      EXPECT_TRUE(s.contains(std::sin(t))) << "sin escaped at " << t;
    }
  }
}

TEST(AnchoredPoints, DeltaKeepsSubUlpOffsets) {
  cplx base(1.625, -0.25);
  Pt p(base, cplx(3e-18, 0.0));
  Pt q(base, cplx(1e-18, 0.0));
  cplx d = delta(p, q);
  EXPECT_GT(std::abs(d), 1e-18);
  EXPECT_NEAR(d.real(), 2e-18, 1e-30);
  // the plain difference of collapsed values loses the offsets entirely
  EXPECT_EQ(p.value() - q.value(), cplx(0.0, 0.0));
}

TEST(AnchoredPoints, PolarBoxEnclosesSamples) {
  Interval mod(0.9, 1.1), arg(0.1, 0.4);
  CBox box = polar_box(mod, arg);
  for (int i = 0; i <= 16; ++i)
    for (int j = 0; j <= 16; ++j) {
      double m = mod.lo + mod.width() * i / 16.0;
      double a = arg.lo + arg.width() * j / 16.0;
      EXPECT_TRUE(box.contains(m * cplx(std::cos(a), std::sin(a))));
    }
}

TEST(DiskNesting, ConcentricBoundedDisks) {
  EXPECT_TRUE(disk_nested(disk(0, 0, 2), disk(0, 0, 1)));
  EXPECT_FALSE(disk_nested(disk(0, 0, 1), disk(0, 0, 2)));
}

TEST(DiskNesting, EqualDisksAreNotNested) {
  EXPECT_FALSE(disk_nested(disk(0, 0, 1), disk(0, 0, 1)));
  Circline u = disk(0.5, 0, 2, false);
  EXPECT_FALSE(disk_nested(u, u));
}

TEST(DiskNesting, UnboundedPairMatchesSampling) {
  Circline a = disk(0, 0, 2, false);
  Circline b = disk(0, 0, 3, false);
  EXPECT_TRUE(disk_nested(a, b));
  for (int i = 0; i < 64; ++i) {
    double th = 2.0 * kPi * i / 64.0;
    cplx z = b.center + b.radius * cplx(std::cos(th), std::sin(th));
    EXPECT_TRUE(circline_interior_contains(a, z));
  }
  for (double r : {3.0, 10.0, 1000.0}) {
    cplx z(r, 0.0);
    EXPECT_TRUE(circline_contains(b, z));
    EXPECT_TRUE(circline_interior_contains(a, z));
  }
  EXPECT_FALSE(disk_nested(b, a));
}

TEST(DiskNesting, MixedSides) {
  // a bounded set can never contain an unbounded one in its interior
  EXPECT_FALSE(disk_nested(disk(0, 0, 5), disk(0, 0, 1, false)));
  EXPECT_TRUE(disk_nested(disk(0, 0, 1, false), disk(5, 0, 1)));
  EXPECT_FALSE(disk_nested(disk(0, 0, 1, false), disk(1.5, 0, 1)));
}

TEST(DiskNesting, StrictOrderOnRandomChains) {
  SplitMix64 rng{0xabcdu};
  for (int round = 0; round < 300; ++round) {
    bool bounded = (rng.next() & 1u) != 0;
    Circline a, b, c;
    if (bounded) {
      double r1 = rng.uniform(2.0, 4.0);
      double r2 = rng.uniform(1.0, r1 - 0.5);
      double r3 = rng.uniform(0.2, r2 - 0.5);
      cplx c1(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      double m2 = (r1 - r2) * 0.9;
      cplx c2 = c1 + cplx(rng.uniform(-m2, m2) / 2.0, rng.uniform(-m2, m2) / 2.0);
      double m3 = (r2 - r3) * 0.9;
      cplx c3 = c2 + cplx(rng.uniform(-m3, m3) / 2.0, rng.uniform(-m3, m3) / 2.0);
      a = Circline{c1, r1, true};
      b = Circline{c2, r2, true};
      c = Circline{c3, r3, true};
    } else {
      double r1 = rng.uniform(0.5, 1.0);
      double r2 = rng.uniform(r1 + 0.5, r1 + 1.5);
      double r3 = rng.uniform(r2 + 0.5, r2 + 1.5);
      cplx c1(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      double m2 = (r2 - r1) * 0.9;
      cplx c2 = c1 + cplx(rng.uniform(-m2, m2) / 2.0, rng.uniform(-m2, m2) / 2.0);
      double m3 = (r3 - r2) * 0.9;
      cplx c3 = c2 + cplx(rng.uniform(-m3, m3) / 2.0, rng.uniform(-m3, m3) / 2.0);
      a = Circline{c1, r1, false};
      b = Circline{c2, r2, false};
      c = Circline{c3, r3, false};
    }
    ASSERT_TRUE(disk_nested(a, b));
    ASSERT_TRUE(disk_nested(b, c));
    EXPECT_TRUE(disk_nested(a, c));   // transitivity
    EXPECT_FALSE(disk_nested(b, a));  // antisymmetry
    EXPECT_FALSE(disk_nested(c, b));
  }
}

TEST(MoebiusMaps, InversionBasics) {
  Moebius inv{0.0, 1.0, 1.0, 0.0};  // z -> 1/z
  EXPECT_NEAR(std::abs(inv.apply(cplx(2.0, 0.0)) - cplx(0.5, 0.0)), 0.0, 1e-15);
  Moebius id = Moebius::identity();
  EXPECT_NEAR(std::abs(id.apply(cplx(1.25, -3.0)) - cplx(1.25, -3.0)), 0.0, 1e-15);
  Moebius comp = inv.compose(inv);
  cplx z(0.7, 0.3);
  EXPECT_NEAR(std::abs(comp.apply(z) - z), 0.0, 1e-15);
}

TEST(MoebiusMaps, InversionMapsCircleRadiusTwoToHalf) {
  Moebius inv{0.0, 1.0, 1.0, 0.0};
  Circline img = image_circline(inv, disk(0, 0, 2));
  EXPECT_NEAR(std::abs(img.center), 0.0, 1e-12);
  EXPECT_NEAR(img.radius, 0.5, 1e-12);
  // the disk |z|<=2 contains the pole 0, so its image contains infinity
  EXPECT_FALSE(img.bounded);
}

TEST(MoebiusMaps, BoundaryImageStaysOnImageCircle) {
  SplitMix64 rng{2024u};
  int done = 0;
  while (done < 60) {
    Moebius t{cplx(rng.uniform(-2, 2), rng.uniform(-2, 2)),
              cplx(rng.uniform(-2, 2), rng.uniform(-2, 2)),
              cplx(rng.uniform(-2, 2), rng.uniform(-2, 2)),
              cplx(rng.uniform(-2, 2), rng.uniform(-2, 2))};
    double s = t.scale();
    if (!(s > 0.0) || std::abs(t.a * t.d - t.b * t.c) < 0.1 * s * s) continue;
    Circline c{cplx(rng.uniform(-1, 1), rng.uniform(-1, 1)), rng.uniform(0.3, 2.0),
               (rng.next() & 1u) != 0};
    if (t.c != cplx(0.0)) {
      double pd = std::abs(t.pole() - c.center);
      if (std::abs(pd - c.radius) < 0.05 * (c.radius + std::abs(t.pole()))) continue;
    }
    Circline img = image_circline(t, c);
    double scale = img.radius + std::abs(img.center);
    for (int i = 0; i < 128; ++i) {
      double th = 2.0 * kPi * i / 128.0;
      cplx z = c.center + c.radius * cplx(std::cos(th), std::sin(th));
      cplx w = t.apply(z);
      EXPECT_LE(std::abs(std::abs(w - img.center) - img.radius), 1e-9 * scale);
    }
    // a strict interior witness lands strictly inside the image set
    cplx wit = c.bounded ? c.center : c.center + (c.radius * 4.0) * cplx(1.0, 0.0);
    if (c.bounded && t.c != cplx(0.0) && std::abs(wit - t.pole()) < 0.05) continue;
    if (!c.bounded && t.c != cplx(0.0) && std::abs(wit - t.pole()) < 0.05) {
      wit = c.center + (c.radius * 4.0) * cplx(-1.0, 0.0);
      if (std::abs(wit - t.pole()) < 0.05) continue;
    }
    EXPECT_TRUE(circline_contains(img, t.apply(wit), 1e-9 * scale));
    ++done;
  }
}

TEST(MoebiusMaps, ConcentricNormalizerCentersBothCircles) {
  SplitMix64 rng{99u};
  for (int round = 0; round < 200; ++round) {
    cplx c1(rng.uniform(-1, 1), rng.uniform(-1, 1));
    double r1 = rng.uniform(2.0, 3.0);
    double off = rng.uniform(0.0, 0.8);
    double ang = rng.uniform(0.0, 2.0 * kPi);
    cplx c2 = c1 + off * cplx(std::cos(ang), std::sin(ang));
    double r2 = rng.uniform(0.2, (r1 - off) * 0.8);
    Moebius t = make_concentric(Circline{c1, r1, true}, Circline{c2, r2, true});
    auto image_radius_spread = [&](cplx c, double r, double& rmin, double& rmax) {
      rmin = HUGE_VAL;
      rmax = 0.0;
      for (int i = 0; i < 64; ++i) {
        double th = 2.0 * kPi * i / 64.0;
        double m = std::abs(t.apply(c + r * cplx(std::cos(th), std::sin(th))));
        rmin = std::min(rmin, m);
        rmax = std::max(rmax, m);
      }
    };
    double a0, a1, b0, b1;
    image_radius_spread(c1, r1, a0, a1);
    image_radius_spread(c2, r2, b0, b1);
    EXPECT_LE((a1 - a0) / a1, 1e-9);
    EXPECT_LE((b1 - b0) / b1, 1e-9);
  }
}

TEST(Curves, LengthAndPointAt) {
  ParamCurve sq;
  sq.closed = true;
  sq.v = {Pt(cplx(0, 0)), Pt(cplx(1, 0)), Pt(cplx(1, 1)), Pt(cplx(0, 1))};
  EXPECT_NEAR(curve_length(sq), 4.0, 1e-15);
  cplx p = curve_point_at(sq, 1.5);
  EXPECT_NEAR(p.real(), 1.0, 1e-15);
  EXPECT_NEAR(p.imag(), 0.5, 1e-15);
  validate_curve(sq);
}

TEST(Curves, SelfIntersectionRejected) {
  ParamCurve bow;
  bow.closed = true;
  bow.v = {Pt(cplx(0, 0)), Pt(cplx(1, 1)), Pt(cplx(1, 0)), Pt(cplx(0, 1))};
  EXPECT_THROW(validate_curve(bow), GeomError);
  ParamCurve dup;
  dup.closed = false;
  dup.v = {Pt(cplx(0, 0)), Pt(cplx(0, 0)), Pt(cplx(1, 0))};
  EXPECT_THROW(validate_curve(dup), GeomError);
}

TEST(Curves, WindingAndRegionMembership) {
  Region r;
  r.outer = circle_curve(cplx(0, 0), 2.0, 256);
  r.holes.push_back(circle_curve(cplx(0, 0), 0.5, 128));
  EXPECT_TRUE(region_contains(r, cplx(1.0, 0.5)));
  EXPECT_FALSE(region_contains(r, cplx(0.1, 0.0)));   // inside the hole
  EXPECT_FALSE(region_contains(r, cplx(3.0, 0.0)));   // outside
  EXPECT_EQ(winding_number(r.outer, cplx(0.3, -0.2)), 1);
  EXPECT_EQ(winding_number(r.outer, cplx(5.0, 0.0)), 0);
}

TEST(OffsetRegion, RejectsNonPositiveWidth) {
  ParamCurve seg;
  seg.v = {Pt(cplx(0, 0)), Pt(cplx(1, 0))};
  Region ambient;
  ambient.outer = circle_curve(cplx(0.5, 0), 10.0, 128);
  EXPECT_THROW(offset_region(seg, 0.0, ambient), GeomError);
  EXPECT_THROW(offset_region(seg, -0.1, ambient), GeomError);
}

TEST(OffsetRegion, StadiumAreaMatchesFormula) {
  ParamCurve seg;
  seg.v = {Pt(cplx(0, 0)), Pt(cplx(1, 0))};
  Region ambient;
  ambient.outer = circle_curve(cplx(0.5, 0), 10.0, 128);
  double L = 0.1;
  Region tube = offset_region(seg, L, ambient);
  Interval bx, by;
  region_bbox(tube, bx, by);
  SplitMix64 rng{7u};
  std::size_t hits = 0, n = 200000;
  for (std::size_t i = 0; i < n; ++i) {
    cplx z(rng.uniform(bx.lo, bx.hi), rng.uniform(by.lo, by.hi));
    if (region_contains(tube, z)) ++hits;
  }
  double area = (double)hits / (double)n * bx.width() * by.width();
  double expect = 1.0 * 2.0 * L + kPi * L * L;
  EXPECT_NEAR(area, expect, 0.02 * expect);
}

TEST(OffsetRegion, MembershipMatchesDistance) {
  ParamCurve arc;
  arc.closed = false;
  for (int i = 0; i <= 32; ++i) {
    double th = kPi / 2.0 * i / 32.0;
    arc.v.push_back(Pt(cplx(std::cos(th), std::sin(th))));
  }
  Region ambient;
  ambient.outer = circle_curve(cplx(0, 0), 10.0, 128);
  double L = 0.15;
  Region tube = offset_region(arc, L, ambient);
  SplitMix64 rng{13u};
  int checked = 0;
  while (checked < 1000) {
    cplx z(rng.uniform(-1.6, 1.6), rng.uniform(-1.6, 1.6));
    double d = curve_dist(arc, z);
    if (std::abs(d - L) < 4.0 * L / 128.0) continue;  // skip the boundary band
    EXPECT_EQ(region_contains(tube, z), d < L) << "probe at distance " << d;
    ++checked;
  }
}

TEST(LevelContour, UnitCircleInAnnulus) {
  Region search;
  search.outer = circle_curve(cplx(0, 0), 1.5, 512);
  search.holes.push_back(circle_curve(cplx(0, 0), 0.5, 256));
  auto field = [](cplx z) { return std::abs(z); };
  ParamCurve c = extract_level_contour(field, 1.0, search, 1e-3);
  ASSERT_GE(c.v.size(), 100u);
  for (const Pt& p : c.v)
    EXPECT_LE(std::abs(std::abs(p.value()) - 1.0), 2e-3);
  for (int i = 0; i < 256; ++i) {
    double th = 2.0 * kPi * i / 256.0;
    EXPECT_LE(curve_dist(c, cplx(std::cos(th), std::sin(th))), 3e-3);
  }
  EXPECT_EQ(std::abs(winding_number(c, cplx(0, 0))), 1);
}

TEST(LevelContour, OutOfRangeValueRejected) {
  Region search;
  search.outer = circle_curve(cplx(0, 0), 1.5, 256);
  search.holes.push_back(circle_curve(cplx(0, 0), 0.5, 128));
  auto field = [](cplx z) { return std::abs(z); };
  EXPECT_THROW(extract_level_contour(field, 3.0, search, 1e-2), GeomError);
  EXPECT_THROW(extract_level_contour(field, 0.1, search, 1e-2), GeomError);
}

TEST(LevelContour, QuadraticFieldDeviation) {
  Region search;
  search.outer = circle_curve(cplx(0, 0), 3.0, 512);
  search.holes.push_back(circle_curve(cplx(0, 0), 1.0, 256));
  auto field = [](cplx z) { return std::abs(z * z + cplx(3.0, 0.0)); };
  // on |z|=1 the field spans [2,4]; on |z|=3 it spans [6,12]; 5 separates
  ParamCurve c = extract_level_contour(field, 5.0, search, 1e-3, nullptr);
  ASSERT_GE(c.v.size(), 100u);
  for (const Pt& p : c.v)
    EXPECT_LE(std::abs(field(p.value()) - 5.0), 1e-2);
}

TEST(LevelTracer, FollowsUnitCircle) {
  TraceField f;
  f.value = [](cplx z) { return std::abs(z); };
  f.grad = [](cplx z) { return z / std::abs(z); };
  TraceOptions opt;
  opt.residual_tol = 1e-10;
  opt.step_min = 1e-4;
  opt.step_max = 0.05;
  opt.value_step = 0.02;
  ParamCurve c = trace_level_curve(f, 1.0, cplx(1.1, 0.0), opt);
  ASSERT_GE(c.v.size(), 100u);
  for (const Pt& p : c.v)
    EXPECT_LE(std::abs(std::abs(p.value()) - 1.0), 1e-10);
  EXPECT_EQ(std::abs(winding_number(c, cplx(0, 0))), 1);
}

TEST(LevelTracer, AdaptsStepToGradient)
{
  // steep radial layer: field runs through [0,2] over a thin annulus band
  TraceField f;
  auto profile = [](double r) { return 1.0 + std::tanh((r - 1.0) * 200.0); };
  f.value = [&](cplx z) { return profile(std::abs(z)); };
  f.grad = [&](cplx z) {
    double r = std::abs(z);
    double c = std::cosh((r - 1.0) * 200.0);
    return z / r * (200.0 / (c * c));
  };
  TraceOptions opt;
  opt.residual_tol = 1e-9;
  opt.step_min = 1e-7;
  opt.step_max = 0.05;
  opt.value_step = 0.05;
  ParamCurve c = trace_level_curve(f, 1.0, cplx(1.002, 0.0), opt);
  ASSERT_GE(c.v.size(), 50u);
  for (const Pt& p : c.v)
    EXPECT_LE(std::abs(std::abs(p.value()) - 1.0), 1e-4);
}

TEST(ImplicitRegions, CombinatorsStayConservative) {
  ImplicitRegion ring = region_intersect(
      region_from_circline(Circline{cplx(0, 0), 2.0, true}),
      region_from_circline(Circline{cplx(0, 0), 1.0, false}));
  SplitMix64 rng{41u};
  for (int i = 0; i < 2000; ++i) {
    cplx z(rng.uniform(-3, 3), rng.uniform(-3, 3));
    double cl = ring.clearance(z);
    double r = std::abs(z);
    bool inside = r >= 1.0 && r <= 2.0;
    EXPECT_EQ(cl >= 0.0, inside);
    double true_dist = std::min(std::abs(r - 1.0), std::abs(2.0 - r));
    EXPECT_LE(std::abs(cl), true_dist + 1e-12);
  }
}
