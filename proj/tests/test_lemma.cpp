#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "harmap/lemma.hpp"

namespace harmap {
namespace {

HarmonicPlaneMap shifted_identity(double shift) {
  RationalFunction f;
  f.poly = {cplx(shift, 0.0), cplx(1.0, 0.0)};
  return map_from_rational(f);
}

LemmaInput demo_input() {
  LemmaInput in;
  in.F = shifted_identity(3.0);
  in.D1 = Circline{cplx(0.0), 2.0, false};
  in.D2 = Circline{cplx(0.0), 1.5, false};
  in.r = 1.0;
  in.R = 5.0;
  in.eps1 = 0.5;
  in.eps2 = 0.5;
  in.eps3 = 0.5;
  return in;
}

LemmaInput wide_input() {
  LemmaInput in;
  in.F = shifted_identity(45.0);
  in.D1 = Circline{cplx(0.0), 3.0, false};
  in.D2 = Circline{cplx(0.0), 1.5, false};
  in.r = 38.0;
  in.R = 52.0;
  in.eps1 = 30.0;
  in.eps2 = 10.0;
  in.eps3 = 10.0;
  return in;
}

const CertRecord* find_record(const std::vector<CertRecord>& rec, const std::string& label) {
  const CertRecord* out = nullptr;
  for (const CertRecord& r : rec)
    if (r.label == label) out = &r;
  return out;
}

TEST(CertRecordTest, PassSemantics) {
  CertRecord lt = make_record("(x)", Interval(0.0, 0.4), '<', 0.5);
  EXPECT_TRUE(lt.pass);
  CertRecord lt_fail = make_record("(x)", Interval(0.0, 0.6), '<', 0.5);
  EXPECT_FALSE(lt_fail.pass);
  CertRecord gt = make_record("(x)", Interval(1.2, 2.0), '>', 1.0);
  EXPECT_TRUE(gt.pass);
  CertRecord eq = make_record("(x)", Interval(7.0, 7.0), '=', 7.0);
  EXPECT_TRUE(eq.pass);
}

TEST(SelectEpsilon0, DemoValue) {
  double e = select_epsilon0(1.0, 5.0, 0.5, 0.5);
  EXPECT_NEAR(e, 0.0176837, 1e-6);
  EXPECT_LE(e, 0.9 * (5.0 - 1.0) / 11.0);
  EXPECT_LE(e, 0.9 * 0.25);
  EXPECT_LE(e, 0.9 * 0.1);
}

TEST(SelectEpsilon0, ShrinksWithEps1) {
  double e = select_epsilon0(1.0, 5.0, 1e-8, 0.5);
  EXPECT_LE(e, 0.45e-8 * 1.0000001);
  EXPECT_GT(e, 0.0);
}

TEST(SelectEpsilon0, GapCapDominatesForLargeTolerances) {
  double e = select_epsilon0(1.0, 12.0, 100.0, 100.0);
  EXPECT_NEAR(e, 0.9, 1e-12);
}

TEST(SelectEpsilon0, RejectsBadArguments) {
  EXPECT_THROW(select_epsilon0(5.0, 1.0, 0.5, 0.5), GeomError);
  EXPECT_THROW(select_epsilon0(1.0, 5.0, 0.0, 0.5), GeomError);
}

TEST(ShrinkToCert, FindsLargestPassingValue) {
  auto pass = [](double x) { return x <= 0.371; };
  double v = lemma_detail::shrink_to_cert(pass, 1.4, "(test)");
  EXPECT_LE(v, 0.9 * 0.371 * 1.001);
  EXPECT_GE(v, 0.9 * 0.371 * 0.99);
}

TEST(ShrinkToCert, PassAtStartReturnsScaledStart) {
  auto pass = [](double x) { return x <= 2.0; };
  double v = lemma_detail::shrink_to_cert(pass, 1.4, "(test)");
  EXPECT_DOUBLE_EQ(v, 0.9 * 1.4);
}

TEST(ShrinkToCert, ReportsCollapse) {
  auto never = [](double) { return false; };
  try {
    lemma_detail::shrink_to_cert(never, 1.0, "(b5)");
    FAIL() << "expected GeomError";
  } catch (const GeomError& e) {
    EXPECT_NE(std::string(e.what()).find("(b5)"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("40 bisection steps"), std::string::npos);
  }
}

TEST(SegSegDist, ParallelAndTouching) {
  double d = lemma_detail::seg_seg_dist(cplx(0.0, 0.0), cplx(1.0, 0.0), cplx(0.0, 0.5),
                                        cplx(1.0, 0.5));
  EXPECT_NEAR(d, 0.5, 1e-15);
  double t = lemma_detail::seg_seg_dist(cplx(0.0, 0.0), cplx(1.0, 0.0), cplx(1.0, 0.0),
                                        cplx(1.0, 1.0));
  EXPECT_NEAR(t, 0.0, 1e-15);
}

TEST(Ingest, RequiresNestedEnds) {
  LemmaInput in = demo_input();
  in.D1.radius = 1.0;  // now inside D2's complement ordering breaks
  std::vector<CertRecord> rec;
  EXPECT_THROW(lemma_ingest(in, rec), GeomError);
}

TEST(Ingest, RejectsMapViolatingHypothesis) {
  LemmaInput in = demo_input();
  in.F = shifted_identity(9.0);  // |F| > 7 on the ring, above R
  std::vector<CertRecord> rec;
  EXPECT_THROW(lemma_ingest(in, rec), CertError);
}

TEST(Ingest, DemoHypothesisCertifiesWithSlack) {
  LemmaInput in = demo_input();
  std::vector<CertRecord> rec;
  lemma_ingest(in, rec);
  const CertRecord* lo = find_record(rec, "(hyp-lo)");
  const CertRecord* hi = find_record(rec, "(hyp-hi)");
  ASSERT_NE(lo, nullptr);
  ASSERT_NE(hi, nullptr);
  EXPECT_TRUE(lo->pass);
  EXPECT_TRUE(hi->pass);
  EXPECT_GE(lo->value.lo, 1.0 - 1e-5 * 4.0);
  EXPECT_LE(hi->value.hi, 5.0 + 1e-5 * 4.0);
}

TEST(PlaceMarkers, CoarseToleranceNeedsFewMarkers) {
  LemmaInput in = demo_input();
  LemmaScaffold sc;
  std::vector<CertRecord> rec;
  place_markers(in, 1.5, sc, rec);
  EXPECT_LE(sc.n, 64);
  EXPECT_EQ((int)sc.p.size(), sc.n);
  const CertRecord* a2 = find_record(rec, "(a2)");
  const CertRecord* a3 = find_record(rec, "(a3)");
  ASSERT_NE(a2, nullptr);
  ASSERT_NE(a3, nullptr);
  EXPECT_TRUE(a2->pass);
  EXPECT_TRUE(a3->pass);
  EXPECT_NEAR(sc.D3.radius, 1.75, 1e-15);
  EXPECT_NEAR(sc.D4.radius, 1.625, 1e-15);
}

TEST(PlaceMarkers, ConstantMapStopsAtEight) {
  LemmaInput in = demo_input();
  RationalFunction f;
  f.poly = {cplx(3.0, 0.0)};
  in.F = map_from_rational(f);
  LemmaScaffold sc;
  std::vector<CertRecord> rec;
  place_markers(in, 0.25, sc, rec);
  EXPECT_EQ(sc.n, 8);
}

TEST(PlaceMarkers, DemoToleranceNeedsDenseMarkers) {
  LemmaInput in = demo_input();
  double eps0 = select_epsilon0(in.r, in.R, in.eps1, in.eps3);
  LemmaScaffold sc;
  std::vector<CertRecord> rec;
  place_markers(in, eps0, sc, rec);
  EXPECT_EQ(sc.n, 8192);
}

TEST(PlaceMarkers, ModulusOfContinuityFailureIsReported) {
  LemmaInput in = demo_input();
  LemmaScaffold sc;
  std::vector<CertRecord> rec;
  try {
    place_markers(in, 1e-9, sc, rec);
    FAIL() << "expected GeomError";
  } catch (const GeomError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("modulus-of-continuity"), std::string::npos);
    EXPECT_NE(msg.find("16384"), std::string::npos);
  }
}

TEST(OrientPole, RayPointsInward) {
  PoleRay right = orient_pole(cplx(2.0, 0.0), cplx(0.0), 0.1);
  EXPECT_NEAR(right.theta, kPi, 1e-15);
  EXPECT_NEAR(right.q.value().real(), 1.9, 1e-15);
  EXPECT_NEAR(right.q.value().imag(), 0.0, 1e-15);
  PoleRay top = orient_pole(cplx(0.0, 1.6), cplx(0.0), 0.2);
  EXPECT_NEAR(top.theta, -kPi / 2.0, 1e-15);
  EXPECT_NEAR(top.q.value().imag(), 1.4, 1e-15);
}

// two-marker scaffold with pocket radius 0.1: the pole modulus is 1/0.1 = 10
// on the pocket boundary, so kappa = 0.9 * min(eps0/n, 3(R-r)) / 10
TEST(SelectKappa, ArithmeticExample) {
  LemmaInput in;
  in.F = shifted_identity(0.0);
  in.D1 = Circline{cplx(0.0), 4.0, false};
  in.D2 = Circline{cplx(0.0), 3.0, false};
  in.r = 1.0;
  in.R = 2.0;
  in.eps1 = in.eps2 = in.eps3 = 1.0;

  LemmaScaffold sc;
  sc.eps0 = 0.1;
  sc.center = cplx(0.0);
  sc.n = 2;
  sc.p = {cplx(2.0, 0.0), cplx(-2.0, 0.0)};
  sc.delta = 0.1;
  std::vector<CertRecord> rec;
  orient_poles(sc, rec);
  const CertRecord* ray = find_record(rec, "(ray)");
  ASSERT_NE(ray, nullptr);
  EXPECT_TRUE(ray->pass);

  select_kappa(in, sc, rec);
  EXPECT_NEAR(sc.kappa, 0.0045, 5e-6);
  EXPECT_NEAR(sc.sup_zeta, 10.0, 0.02);
  const CertRecord* eq4 = find_record(rec, "(Eq4)");
  ASSERT_NE(eq4, nullptr);
  EXPECT_TRUE(eq4->pass);

  locate_a(in, sc, rec);
  EXPECT_NEAR(sc.rho_a, sc.kappa / 3.0, 1e-18);
  EXPECT_NEAR(dist(sc.a[0], Pt(sc.p[0])), sc.rho_a, 1e-18);
  const CertRecord* eq4a = find_record(rec, "(Eq4-a)");
  ASSERT_NE(eq4a, nullptr);
  EXPECT_TRUE(eq4a->pass);
  EXPECT_LT(eq4a->value.hi, 1e-10);
}

TEST(LocateA, ReducesKappaWhenPointLeavesPocket) {
  LemmaInput in;
  in.F = shifted_identity(0.0);
  in.D1 = Circline{cplx(0.0), 4.0, false};
  in.D2 = Circline{cplx(0.0), 3.0, false};
  in.r = 1.0;
  in.R = 2.0;
  in.eps1 = in.eps2 = in.eps3 = 1.0;

  LemmaScaffold sc;
  sc.eps0 = 0.1;
  sc.center = cplx(0.0);
  sc.n = 2;
  sc.p = {cplx(2.0, 0.0), cplx(-2.0, 0.0)};
  sc.delta = 0.1;
  std::vector<CertRecord> rec;
  orient_poles(sc, rec);
  sc.sup_zeta = 10.0;
  sc.kappa = 3.0 * (in.R - in.r) * sc.delta * 2.0;  // would put a_j outside the pocket
  locate_a(in, sc, rec);
  EXPECT_LT(sc.rho_a, sc.delta);
  EXPECT_NEAR(sc.kappa, 3.0 * sc.delta * 2.0 / 4.0, 1e-15);
}

// the first deformation step adds exactly 3(R-r) along the first frame vector
// at its own distinguished point
TEST(HStage, FirstStepIdentityAtA1) {
  LemmaInput in = wide_input();
  std::vector<CertRecord> rec;
  LemmaScaffold sc;
  place_markers(in, 16.0, sc, rec);
  select_delta(in, sc, rec);
  orient_poles(sc, rec);
  select_kappa(in, sc, rec);
  locate_a(in, sc, rec);
  DeformationLedger led;
  build_h_stage(in, sc, led, rec);

  Vec2 base = hp_eval_raw(in.F, sc.a[0]);
  Vec2 expect = base + sc.S[0].e1 * (3.0 * (in.R - in.r));
  EXPECT_NEAR(led.h_at_a_stage[0].x, expect.x, 1e-9 * expect.norm());
  EXPECT_NEAR(led.h_at_a_stage[0].y, expect.y, 1e-9 * expect.norm());
}

TEST(DemoPipeline, ReachesCarveGateHonestly) {
  LemmaInput in = demo_input();
  std::vector<CertRecord> rec;
  lemma_ingest(in, rec);
  double eps0 = select_epsilon0(in.r, in.R, in.eps1, in.eps3);

  LemmaScaffold sc;
  place_markers(in, eps0, sc, rec);
  ASSERT_EQ(sc.n, 8192);

  select_delta(in, sc, rec);
  double spacing = 2.0 * kPi * sc.D4.radius / sc.n;
  EXPECT_LT(sc.delta, 0.125 * spacing);
  EXPECT_NEAR(sc.delta, 1.4008e-4, 2e-7);
  for (const char* lbl : {"(d1)", "(d2)", "(d3)", "(d4)"}) {
    const CertRecord* d = find_record(rec, lbl);
    ASSERT_NE(d, nullptr) << lbl;
    EXPECT_TRUE(d->pass) << lbl;
  }

  orient_poles(sc, rec);
  select_kappa(in, sc, rec);
  EXPECT_NEAR(sc.kappa, 0.9 * (eps0 / sc.n) * sc.delta, 0.002 * sc.kappa);

  locate_a(in, sc, rec);
  EXPECT_NEAR(sc.rho_a, sc.kappa / 12.0, 1e-16);
  EXPECT_LT(sc.rho_a, sc.delta);

  DeformationLedger led;
  build_h_stage(in, sc, led, rec);
  const CertRecord* b2 = find_record(rec, "(b2)");
  const CertRecord* b3 = find_record(rec, "(b3)");
  const CertRecord* b4 = find_record(rec, "(b4)");
  ASSERT_NE(b2, nullptr);
  ASSERT_NE(b3, nullptr);
  ASSERT_NE(b4, nullptr);
  EXPECT_TRUE(b2->pass);
  EXPECT_LT(b2->value.hi, 0.02);
  EXPECT_TRUE(b3->pass);
  EXPECT_TRUE(b4->pass);
  EXPECT_GT(b4->value.lo, 13.0);

  LemmaBudgets budgets;
  try {
    carve_D6(in, sc, led, budgets, rec);
    FAIL() << "expected FeasibilityError from the carve cost gate";
  } catch (const FeasibilityError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("max_certified_ops"), std::string::npos);
    EXPECT_NE(msg.find("exceeds"), std::string::npos);
  }
}

TEST(WidePipeline, CarvesAndFailsHonestlyAtGStage) {
  LemmaInput in = wide_input();
  std::vector<CertRecord> rec;
  lemma_ingest(in, rec);

  LemmaScaffold sc;
  place_markers(in, 16.0, sc, rec);
  ASSERT_EQ(sc.n, 8);
  select_delta(in, sc, rec);
  EXPECT_NEAR(sc.delta, 0.9 * 0.999 * 0.45 * 0.375, 1e-9);
  orient_poles(sc, rec);
  select_kappa(in, sc, rec);
  EXPECT_NEAR(sc.kappa, 0.9 * 2.0 * sc.delta, 0.01 * sc.kappa);
  locate_a(in, sc, rec);
  DeformationLedger led;
  build_h_stage(in, sc, led, rec);
  const CertRecord* b4 = find_record(rec, "(b4)");
  ASSERT_NE(b4, nullptr);
  EXPECT_GT(b4->value.lo, 80.0);

  LemmaBudgets budgets;
  carve_D6(in, sc, led, budgets, rec);
  for (int j = 0; j < sc.n; ++j) {
    EXPECT_GT(sc.phi[j], 0.4) << j;
    EXPECT_LT(sc.phi[j], 1.2) << j;
    EXPECT_LE(sc.w[j], sc.phi[j]) << j;
    EXPECT_GT(sc.w[j], 0.3) << j;
    EXPECT_GT(sc.nu[j], 0.0) << j;
  }
  for (const char* lbl : {"(b5)", "(b6)", "(b7)", "(D6)", "(f1)", "(D7)", "(Q1)", "(Q2)",
                          "(Q3)", "(L0-1)", "(L0-2)", "(L0-3)"}) {
    const CertRecord* rcd = find_record(rec, lbl);
    ASSERT_NE(rcd, nullptr) << lbl;
    EXPECT_TRUE(rcd->pass) << lbl;
  }
  EXPECT_GT(curve_signed_area(sc.dD6), 0.0);
  EXPECT_TRUE(region_contains(sc.K, cplx(0.0)));
  EXPECT_FALSE(region_contains(sc.K, sc.p[0]));
  EXPECT_GT(sc.L0, 2e-3);
  EXPECT_LT(sc.L0, 5e-3);

  try {
    build_g_stage(in, sc, led, budgets, rec);
    FAIL() << "expected the thin-collar approximation to fail";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("g stage"), std::string::npos);
  }
}

TEST(RunLemma, WideDriverPropagatesGStageFailure) {
  LemmaInput in = wide_input();
  LemmaOptions opt;
  opt.epsilon0_override = 16.0;
  try {
    run_lemma(in, opt);
    FAIL() << "expected a labeled failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("g stage"), std::string::npos);
  }
}

// hand-built scaffold with a cubic map whose modulus grows radially: the
// finalization stage must extract a certified level contour between the
// carved boundary and the inner circle
TEST(Finalize, SyntheticContourExtraction) {
  LemmaInput in;
  RationalFunction f;
  f.poly = {cplx(0.0), cplx(0.0), cplx(0.0), cplx(0.505, 0.0)};
  in.F = map_from_rational(f);
  in.D1 = Circline{cplx(0.0), 2.0, false};
  in.D2 = Circline{cplx(0.0), 1.5, false};
  in.r = 1.0;
  in.R = 2.0;
  in.eps1 = 0.5;
  in.eps2 = 0.5;
  in.eps3 = 0.5;

  LemmaScaffold sc;
  sc.eps0 = 0.1;
  sc.center = cplx(0.0);
  sc.n = 4;
  sc.kappa = 0.0;
  sc.sup_zeta = 0.0;
  sc.D3 = Circline{cplx(0.0), 1.75, false};
  sc.D4 = Circline{cplx(0.0), 1.625, false};
  sc.delta = 0.01;
  sc.L0 = 0.005;
  sc.m7 = 0.05;
  sc.dD6 = circle_curve(cplx(0.0), 1.6, 192);
  ASSERT_GT(curve_signed_area(sc.dD6), 0.0);
  sc.K = Region{sc.dD6, {}};
  sc.sigma_d6 = region_from_polygon(sc.K);
  sc.D7.clearance = [](cplx z) { return 0.3 - std::abs(z); };
  sc.D7.bx = Interval(-0.3, 0.3);
  sc.D7.by = Interval(-0.3, 0.3);

  DeformationLedger led;
  led.h0 = in.F;

  std::vector<CertRecord> rec;
  LemmaOutput out = lemma_finalize(in, sc, led, rec);

  for (const char* lbl : {"(L4-1)", "(L4-2)", "(L4-3)", "(L3-3)", "(L3-1)", "(L3-2)",
                          "(L3-4)", "(poles)"}) {
    const CertRecord* rcd = find_record(rec, lbl);
    ASSERT_NE(rcd, nullptr) << lbl;
    EXPECT_TRUE(rcd->pass) << lbl;
  }
  const CertRecord* band = find_record(rec, "(L3-3)");
  EXPECT_NE(band->note.find("level 1.75"), std::string::npos);

  ASSERT_GT(out.D.boundary.v.size(), 16u);
  EXPECT_EQ(std::abs(winding_number(out.D.boundary, cplx(0.0))), 1);
  EXPECT_EQ(winding_number(out.D.boundary, cplx(1.55, 0.0)), 0);
  for (const Pt& v : out.D.boundary.v) {
    double d = std::abs(v.value());
    EXPECT_GT(d, 1.5);
    EXPECT_LT(d, 1.53);
  }
}

}  // namespace
}  // namespace harmap
