#include <gtest/gtest.h>

#include <cmath>

#include "../support/fields.hpp"
#include "sode/global.hpp"

using namespace sode;
using tsup::field;
using tsup::inf_dist;

namespace {

SodeField flat2() { return field({"0", "0"}); }

/// Circles c(t) = (cos t, sin t) solve x'' = -x |x'|^2.
SodeField circular() { return field({"-x1*(y1^2 + y2^2)", "-x2*(y1^2 + y2^2)"}); }

ProbeSampling small(std::size_t n, std::uint64_t seed = 1) {
  ProbeSampling s;
  s.samples = n;
  s.seed = seed;
  return s;
}

BumpSpec unit_bump() {
  BumpSpec b;
  b.center_x = {0.0, 0.0};
  b.center_y = {0.5, 0.5};
  b.radius_x = {0.5, 0.5};
  b.radius_y = {0.5, 0.5};
  b.amplitude = {1.0, -0.5};
  return b;
}

bool same_box(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) return false;
  for (std::size_t i = 0; i < a.dim(); ++i)
    if (a.axes[i].lo != b.axes[i].lo || a.axes[i].hi != b.axes[i].hi) return false;
  return true;
}

}  // namespace

// ---- sampling -------------------------------------------------------------------

TEST(GlobalSampling, PrefixNestedAndAwayFromZero) {
  const Box K = Box::cube(2, -1, 1);
  const auto a = probe_initial_conditions(K, small(50));
  const auto b = probe_initial_conditions(K, small(200));
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].y, b[i].y);
  }
  for (const auto& p : b) {
    EXPECT_TRUE(K.contains(p.x));
    EXPECT_GE(tsup::inf_norm(p.y), 0.25);
  }
  EXPECT_EQ(probe_initial_conditions(K, small(100000)).size(), kMaxProbeSamples);
  ProbeSampling tiny = small(5);
  tiny.y_box = Box::cube(2, -0.1, 0.1);
  EXPECT_THROW(probe_initial_conditions(K, tiny), ValidationError);
}

TEST(GlobalSampling, LadderScalesAboutCenter) {
  const auto l = box_ladder(Box({{0.0, 2.0}, {1.0, 2.0}}));
  ASSERT_EQ(l.size(), 4u);
  EXPECT_DOUBLE_EQ(l[3].axes[0].lo, -7.0);
  EXPECT_DOUBLE_EQ(l[3].axes[0].hi, 9.0);
  EXPECT_DOUBLE_EQ(l[1].axes[1].lo, 0.5);
  EXPECT_DOUBLE_EQ(l[1].axes[1].hi, 2.5);
}

// ---- pseudoconvexity ------------------------------------------------------------

TEST(GlobalPseudoconvexity, FlatChordsStayInK) {
  const Box K = Box::cube(2, -1, 1);
  const EvidenceReport r = probe_pseudoconvexity(flat2(), K, small(400));
  EXPECT_EQ(r.verdict, Verdict::EvidenceFor);
  ASSERT_TRUE(r.k_prime.has_value());
  EXPECT_TRUE(same_box(*r.k_prime, K));
  EXPECT_GT(r.segments, 0u);
  EXPECT_NE(r.note.find("not a proof"), std::string::npos);
}

TEST(GlobalPseudoconvexity, PoincareHasBoundedHull) {
  const Box K({{-1.0, 1.0}, {1.0, 2.0}});
  const EvidenceReport r = probe_pseudoconvexity(tsup::poincare(), K, small(300));
  EXPECT_EQ(r.verdict, Verdict::EvidenceFor);
  ASSERT_TRUE(r.k_prime.has_value());
  // A semicircle with both ends in K peaks below the circle through the
  // corners (-1, 2) and (1, 2) centred on the axis: radius sqrt(5).
  EXPECT_LE(r.k_prime->axes[1].hi, std::sqrt(5.0) + 1e-6);
  EXPECT_GT(r.k_prime->axes[1].hi, 2.0);
  EXPECT_GE(r.k_prime->axes[1].lo, 1.0 - 1e-12);
}

TEST(GlobalPseudoconvexity, OscillatorWithFastFibersIsACounterexample) {
  // x'' = -x: every orbit returns to K, with amplitude up to ||y||.
  const SodeField h = field({"-x1", "-x2"});
  ProbeSampling s = small(200);
  s.y_box = Box::cube(2, -20.0, 20.0);
  const EvidenceReport r = probe_pseudoconvexity(h, Box::cube(2, -1, 1), s);
  ASSERT_EQ(r.verdict, Verdict::CounterexampleFound);
  ASSERT_TRUE(r.witness.has_value());
  EXPECT_TRUE(replay_witness(h, r));
  // Replaying a different field must not reproduce it.
  EXPECT_FALSE(replay_witness(flat2(), r));
}

TEST(GlobalPseudoconvexity, NoReturningSegmentIsInconclusive) {
  // Fast straight lines leave a tiny K before the first dense sample.
  ProbeSampling s = small(20);
  s.y_box = Box::cube(1, 1e3, 2e3);
  const EvidenceReport r = probe_pseudoconvexity(field({"0"}), Box::cube(1, 0.0, 1e-9), s);
  EXPECT_EQ(r.segments, 0u);
  EXPECT_EQ(r.verdict, Verdict::Inconclusive);
  EXPECT_FALSE(r.k_prime.has_value());
}

// ---- disprisonment --------------------------------------------------------------

TEST(GlobalDisprisonment, FlatLinesEscape) {
  const EvidenceReport r = probe_disprisonment(flat2(), Box::cube(2, -1, 1), small(300));
  EXPECT_EQ(r.verdict, Verdict::EvidenceFor);
  EXPECT_EQ(r.candidates, 0u);
  EXPECT_EQ(r.escaped, r.samples);
}

TEST(GlobalDisprisonment, CircularOrbitIsImprisoned) {
  const SodeField c = circular();
  const EvidenceReport r = probe_disprisonment(c, Box::cube(2, -1, 1), small(200));
  ASSERT_EQ(r.verdict, Verdict::CounterexampleFound);
  ASSERT_TRUE(r.witness.has_value());
  EXPECT_GT(r.candidates, 0u);
  EXPECT_TRUE(replay_witness(c, r));
}

TEST(GlobalDisprisonment, CircleIsAGeodesic) {
  const Curve circle = [](double t) {
    return CurveJet{{std::cos(t), std::sin(t)}, {-std::sin(t), std::cos(t)}, {-std::cos(t), -std::sin(t)}};
  };
  EXPECT_LT(geodesic_residual(circular(), circle, std::vector<double>{0.0, 0.7, 2.0, 5.0}), 1e-15);
}

TEST(GlobalDisprisonment, BlowUpCurvesAreTalliedSeparately) {
  const EvidenceReport r = probe_disprisonment(field({"pi*(1 + y1^2)"}), Box::cube(1, -1, 1), small(100));
  EXPECT_EQ(r.verdict, Verdict::EvidenceFor);
  EXPECT_EQ(r.candidates, 0u);
  EXPECT_GT(r.blowup, 0u);
  EXPECT_EQ(r.blowup + r.escaped + r.truncated, r.samples + r.truncated);
}

TEST(GlobalDisprisonment, DeterministicForFixedSeed) {
  const SodeField c = circular();
  const EvidenceReport a = probe_disprisonment(c, Box::cube(2, -1, 1), small(150, 7));
  const EvidenceReport b = probe_disprisonment(c, Box::cube(2, -1, 1), small(150, 7));
  EXPECT_EQ(a.verdict, b.verdict);
  EXPECT_EQ(a.candidates, b.candidates);
  EXPECT_EQ(a.escaped, b.escaped);
  EXPECT_EQ(a.ladder_counts, b.ladder_counts);
  ASSERT_TRUE(a.witness && b.witness);
  EXPECT_EQ(a.witness->sample_index, b.witness->sample_index);
  EXPECT_EQ(a.witness->x0, b.witness->x0);
  EXPECT_EQ(a.witness->y0, b.witness->y0);
  const EvidenceReport p1 = probe_pseudoconvexity(tsup::poincare(), Box({{-1, 1}, {1, 2}}), small(100, 3));
  const EvidenceReport p2 = probe_pseudoconvexity(tsup::poincare(), Box({{-1, 1}, {1, 2}}), small(100, 3));
  ASSERT_TRUE(p1.k_prime && p2.k_prime);
  EXPECT_TRUE(same_box(*p1.k_prime, *p2.k_prime));
}

TEST(GlobalDisprisonment, MoreSamplesNeverRemoveCandidates) {
  const SodeField c = circular();
  std::size_t prev = 0;
  for (std::size_t n : {25u, 50u, 100u, 200u}) {
    const EvidenceReport r = probe_disprisonment(c, Box::cube(2, -1, 1), small(n));
    EXPECT_GE(r.candidates, prev);
    if (prev > 0) {
      EXPECT_EQ(r.verdict, Verdict::CounterexampleFound);
    }
    prev = r.candidates;
  }
}

// ---- shooting -------------------------------------------------------------------

TEST(GlobalShooting, FlatConvergesInOneStep) {
  const Vec p{0.5, -1.0}, q{2.0, 3.0}, v0{0.0, 0.0};
  const ShootingResult r = connect_geodesically(flat2(), p, q, 1.0, v0);
  EXPECT_LE(r.iterations, 1u);
  EXPECT_LT(inf_dist(r.v, {1.5, 4.0}), 1e-8);
}

TEST(GlobalShooting, ExponentialGrowth) {
  const Vec p{0.0, 0.0}, q{1.0, 1.0}, v0{0.3, 0.3};
  const ShootingResult r = connect_geodesically(field({"y1", "y2"}), p, q, 1.0, v0);
  const double e = 1.0 / (std::exp(1.0) - 1.0);
  EXPECT_LT(inf_dist(r.v, {e, e}), 1e-8);
  EXPECT_NEAR(r.v[0], 0.581977, 1e-6);
}

TEST(GlobalShooting, HyperbolicRecoversUnitVector) {
  const SodeField p = tsup::poincare();
  const Vec from{0.0, 1.0}, to{std::tanh(1.0), 1.0 / std::cosh(1.0)}, v0{0.5, 0.0};
  const ShootingResult r = connect_geodesically(p, from, to, 1.0, v0);
  EXPECT_LT(inf_dist(r.v, {1.0, 0.0}), 1e-6);
  EXPECT_LE(r.iterations, 10u);
  EXPECT_LT(r.residual, 1e-8);
  EXPECT_EQ(r.history.size(), r.iterations + 1);
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LT(r.history[i], r.history[i - 1]);
  // The connecting curve is a geodesic.
  const Trajectory tr = integrate(p, TangentPoint(from, r.v), 0.0, 1.0, FlowOptions::with_tolerances(1e-12, 1e-11));
  EXPECT_LT(geodesic_residual(p, tr, interior_times(tr, 50)), 1e-6);
  EXPECT_LT(inf_dist(tr.final_state().x, to), 1e-8);
}

TEST(GlobalShooting, Errors) {
  const Vec p{0.0, 0.0}, q{1.0, 1.0}, v0{0.0, 0.0};
  EXPECT_THROW(connect_geodesically(flat2(), p, q, 0.0, v0), ValidationError);
  EXPECT_THROW(connect_geodesically(flat2(), p, Vec{1.0}, 1.0, v0), ValidationError);
  ShootingOptions o;
  o.max_iter = 0;
  try {
    connect_geodesically(flat2(), p, q, 1.0, v0, o);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("did not converge"), std::string::npos);
  }
  // Initial guess outside the eps-domain of the blow-up field.
  const Vec p1{0.0}, q1{0.1}, w{0.0};
  EXPECT_THROW(connect_geodesically(field({"pi*(1 + y1^2)"}), p1, q1, 1.0, w), DomainError);
}

// ---- C0 distance and bumps ------------------------------------------------------

TEST(GlobalC0, IdenticalFieldsAreAtDistanceZero) {
  const Box region = Box::cube(4, -1, 1);
  EXPECT_EQ(c0_distance(tsup::poincare(), tsup::poincare(), Box({{-1, 1}, {1, 2}, {-1, 1}, {-1, 1}})).value, 0.0);
  EXPECT_EQ(c0_distance(flat2(), flat2(), region).value, 0.0);
}

TEST(GlobalC0, FlatVersusPoincare) {
  // |S^1| = 2|y1 y2|/x2 peaks at 2 on the grid corner x2 = 1, |y| = 1.
  const C0Distance d = c0_distance(flat2(), tsup::poincare(), Box({{-1, 1}, {1, 2}, {-1, 1}, {-1, 1}}));
  EXPECT_DOUBLE_EQ(d.value, 2.0);
  ASSERT_EQ(d.argmax.size(), 4u);
  EXPECT_DOUBLE_EQ(d.argmax[1], 1.0);
  EXPECT_EQ(d.samples, 9u * 9 * 9 * 9 + 2000);
}

TEST(GlobalBump, ProfileSupportAndNorm) {
  const BumpSpec b = unit_bump().scaled_to(0.01);
  EXPECT_NEAR(b.sup_norm(), 0.01, 1e-15);
  const SodeField f = perturb(flat2(), b);
  // Peak at the centre.
  const Vec peak = f(Vec{0.0, 0.0}, Vec{0.5, 0.5});
  EXPECT_NEAR(peak[0], 0.01, 1e-15);
  EXPECT_NEAR(peak[1], -0.005, 1e-15);
  // Vanishes outside the support and on its boundary.
  for (const auto& [x, y] : std::vector<std::pair<Vec, Vec>>{
           {{0.6, 0.0}, {0.5, 0.5}}, {{0.0, 0.0}, {1.2, 0.5}}, {{0.5, 0.0}, {0.5, 0.5}}, {{3, 3}, {-2, 7}}})
    EXPECT_EQ(tsup::inf_norm(f(x, y)), 0.0);
  const Box s = b.support();
  EXPECT_DOUBLE_EQ(s.axes[2].lo, 0.0);
  EXPECT_DOUBLE_EQ(s.axes[3].hi, 1.0);
}

TEST(GlobalBump, C0DistanceRecoversAmplitude) {
  const BumpSpec b = unit_bump().scaled_to(0.01);
  const C0Distance d = c0_distance(flat2(), perturb(flat2(), b), b.support());
  EXPECT_GE(d.value, 0.009);
  EXPECT_LE(d.value, 0.01 + 1e-15);
}

TEST(GlobalBump, ZeroAmplitudeIsIdentity) {
  BumpSpec b = unit_bump();
  b.amplitude = {0.0, 0.0};
  const SodeField p = tsup::poincare();
  const SodeField q = perturb(p, b);
  EXPECT_EQ(q(Vec{0.1, 1.2}, Vec{0.3, 0.4}), p(Vec{0.1, 1.2}, Vec{0.3, 0.4}));
  EXPECT_THROW(b.scaled_to(1.0), ValidationError);
  BumpSpec bad = unit_bump();
  bad.radius_x = {0.0, 1.0};
  EXPECT_THROW(perturb(p, bad), ValidationError);
}

TEST(GlobalStability, SmallBumpPreservesFlatVerdicts) {
  const BumpSpec b = unit_bump().scaled_to(0.01);
  const SodeField f = perturb(flat2(), b);
  const Box K = Box::cube(2, -1, 1);
  EXPECT_EQ(probe_pseudoconvexity(f, K, small(300)).verdict, Verdict::EvidenceFor);
  EXPECT_EQ(probe_disprisonment(f, K, small(300)).verdict, Verdict::EvidenceFor);
}

TEST(GlobalStability, SweepKeepsStableEndAsLo) {
  const SodeField h = flat2();
  const StabilitySweep sw = stability_sweep(h, unit_bump(), Box::cube(2, -1, 1), 0.0, 0.01, 3, small(60));
  ASSERT_EQ(sw.evaluated.size(), 2u);
  EXPECT_TRUE(sw.evaluated[0].stable());
  EXPECT_TRUE(sw.evaluated[1].stable());
  ASSERT_TRUE(sw.transition_lo.has_value());
  EXPECT_EQ(*sw.transition_lo, 0.01);
  EXPECT_FALSE(sw.transition_hi.has_value());
}
