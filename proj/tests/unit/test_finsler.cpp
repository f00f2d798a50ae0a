#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../support/fields.hpp"
#include "../support/riemann.hpp"
#include "sode/finsler.hpp"

using namespace sode;
using tsup::inf_dist;
using tsup::inf_norm;

namespace {

const char* kHyperbolic = "(y1^2 + y2^2)/x2^2";

struct MetricCase {
  const char* L;
  tsup::Metric g;
  Box x_box;
};

/// Riemannian test metrics with expression-free closed forms for the oracle.
std::vector<MetricCase> metric_suite() {
  return {
      {kHyperbolic,
       [](const std::vector<double>& x) { return Eigen::MatrixXd(Eigen::MatrixXd::Identity(2, 2) / (x[1] * x[1])); },
       Box({{-1.0, 1.0}, {0.5, 2.0}})},
      {"y1^2 + sin(x1)^2*y2^2",
       [](const std::vector<double>& x) {
         Eigen::MatrixXd g = Eigen::MatrixXd::Identity(2, 2);
         g(1, 1) = std::sin(x[0]) * std::sin(x[0]);
         return g;
       },
       Box({{0.5, 2.5}, {-1.0, 1.0}})},
      {"(1 + x1^2)*y1^2 + sin(x1 + x2)*y1*y2 + (2 + cos(x2))*y2^2",
       [](const std::vector<double>& x) {
         Eigen::MatrixXd g(2, 2);
         g << 1 + x[0] * x[0], 0.5 * std::sin(x[0] + x[1]), 0.5 * std::sin(x[0] + x[1]), 2 + std::cos(x[1]);
         return g;
       },
       Box::cube(2, -1.0, 1.0)},
  };
}

Vec sample_in(std::mt19937_64& rng, const Box& b) {
  Vec v;
  for (const auto& a : b.axes) v.push_back(std::uniform_real_distribution<double>(a.lo, a.hi)(rng));
  return v;
}

Vec nonzero_fiber(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec y{u(rng), u(rng)};
  while (inf_norm(y) < 0.1) y = {u(rng), u(rng)};
  return y;
}

}  // namespace

TEST(FinslerHessian, Examples) {
  const auto flat = FinslerStructure::parse("y1^2 + y2^2", 2);
  EXPECT_LT((flat.vertical_hessian(Vec{0.3, 0.1}, Vec{1, 2}) - Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-14);
  const auto hyp = FinslerStructure::parse(kHyperbolic, 2);
  EXPECT_LT((hyp.vertical_hessian(Vec{0.0, 2.0}, Vec{1, -1}) - 0.25 * Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-14);
  const auto mink = FinslerStructure::parse("y1^2 - y2^2", 2);
  const Eigen::MatrixXd g = mink.vertical_hessian(Vec{0, 0}, Vec{1, 3});
  EXPECT_DOUBLE_EQ(g(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(g(1, 1), -1.0);
  EXPECT_DOUBLE_EQ(g(0, 1), 0.0);
}

TEST(FinslerHessian, DegenerateAndZeroFiberAreRejected) {
  const auto deg = FinslerStructure::parse("y1^2", 2);
  try {
    deg.vertical_hessian(Vec{0, 0}, Vec{1, 1});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("nondegenerate"), std::string::npos);
  }
  const auto flat = FinslerStructure::parse("y1^2 + y2^2", 2);
  EXPECT_THROW(flat.vertical_hessian(Vec{0, 0}, Vec{0, 0}), ValidationError);
  EXPECT_THROW(flat.geodesic_coefficients(Vec{0, 0}, Vec{0, 0}), ValidationError);
}

TEST(FinslerHessian, SecondDegreeHomogeneity) {
  SampleSpec spec;
  spec.x_box = Box({{-1.0, 1.0}, {0.5, 2.0}});
  EXPECT_TRUE(FinslerStructure::parse(kHyperbolic, 2).check_h2(spec).ok);
  EXPECT_TRUE(FinslerStructure::parse("y1^2 - y2^2", 2).check_h2().ok);
  EXPECT_FALSE(FinslerStructure::parse("y1^2 + y2", 2).check_h2().ok);
  EXPECT_FALSE(FinslerStructure::parse("sqrt(y1^2 + y2^2)", 2).check_h2().ok);
}

TEST(FinslerHessian, EulerIdentity) {
  std::mt19937_64 rng(7);
  for (const auto& m : metric_suite()) {
    const auto f = FinslerStructure::parse(m.L, 2);
    for (int s = 0; s < 50; ++s) {
      const Vec x = sample_in(rng, m.x_box), y = nonzero_fiber(rng);
      const Eigen::Map<const Eigen::Vector2d> yv(y.data());
      const double gyy = yv.dot(f.vertical_hessian(x, y) * yv);
      EXPECT_NEAR(gyy, f.value(x, y), 1e-8 * std::max(1.0, std::abs(gyy)));
    }
  }
}

TEST(FinslerCoefficients, FlatAndMinkowskiVanish) {
  std::mt19937_64 rng(8);
  const auto flat = FinslerStructure::parse("y1^2 + y2^2", 2);
  const auto mink = FinslerStructure::parse("y1^2 - y2^2", 2);
  for (int s = 0; s < 20; ++s) {
    const Vec x = sample_in(rng, Box::cube(2, -3, 3));
    const Vec y = nonzero_fiber(rng);
    EXPECT_EQ(inf_norm(flat.geodesic_coefficients(x, y)), 0.0);
    EXPECT_EQ(inf_norm(mink.geodesic_coefficients(x, y)), 0.0);
  }
}

TEST(FinslerCoefficients, HyperbolicIsThePoincareSpray) {
  const auto hyp = FinslerStructure::parse(kHyperbolic, 2);
  const Vec g = hyp.geodesic_coefficients(Vec{0.0, 1.0}, Vec{1.0, 0.0});
  EXPECT_NEAR(g[0], 0.0, 1e-14);
  EXPECT_NEAR(g[1], -1.0, 1e-14);

  const SodeField spray = finsler_semispray(hyp);
  EXPECT_TRUE(spray.excludes_zero_section());
  const SodeField p = tsup::poincare();
  std::mt19937_64 rng(9);
  for (int s = 0; s < 100; ++s) {
    const Vec x = sample_in(rng, Box({{-1.0, 1.0}, {0.5, 2.0}})), y = nonzero_fiber(rng);
    EXPECT_LT(inf_dist(spray(x, y), p(x, y)), 1e-10);
  }
}

TEST(FinslerCoefficients, ChristoffelContractionOracle) {
  std::mt19937_64 rng(10);
  for (const auto& m : metric_suite()) {
    const auto f = FinslerStructure::parse(m.L, 2);
    for (int s = 0; s < 100; ++s) {
      const Vec x = sample_in(rng, m.x_box), y = nonzero_fiber(rng);
      const Vec oracle = tsup::christoffel_contraction(tsup::christoffel(m.g, x), y);
      EXPECT_LT(inf_dist(f.geodesic_coefficients(x, y), oracle), 1e-8) << m.L;
    }
  }
}

TEST(FinslerConnection, HyperbolicFcncExample) {
  const auto hyp = FinslerStructure::parse(kHyperbolic, 2);
  const ConnectionField c = finsler_connection(hyp);
  const Vec y{0.7, -0.3};
  const Eigen::MatrixXd G = c(Vec{0.0, 1.0}, y);
  EXPECT_NEAR(G(0, 0), 2 * y[1], 1e-13);
  EXPECT_NEAR(G(0, 1), 2 * y[0], 1e-13);
  EXPECT_NEAR(G(1, 0), -2 * y[0], 1e-13);
  EXPECT_NEAR(G(1, 1), 2 * y[1], 1e-13);
}

TEST(FinslerConnection, FlatIsZero) {
  const ConnectionField c = finsler_connection(FinslerStructure::parse("y1^2 + y2^2", 2));
  EXPECT_EQ(c(Vec{0.4, 0.2}, Vec{1.0, -2.0}).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FinslerConnection, NegatedTraditionalCoefficients) {
  // Traditional G^i = chr^i_jk y^j y^k for Riemannian L, so
  // N^i_j = dG^i/dy^j = 2 chr^i_jk y^k and the returned G = -N.
  std::mt19937_64 rng(12);
  for (const auto& m : metric_suite()) {
    const ConnectionField c = finsler_connection(FinslerStructure::parse(m.L, 2));
    for (int s = 0; s < 30; ++s) {
      const Vec x = sample_in(rng, m.x_box), y = nonzero_fiber(rng);
      const tsup::Christoffel chr = tsup::christoffel(m.g, x);
      const Eigen::MatrixXd G = c(x, y);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const double N = 2 * (chr[i](j, 0) * y[0] + chr[i](j, 1) * y[1]);
          EXPECT_NEAR(G(i, j), -N, 1e-8) << m.L;
        }
    }
  }
}

TEST(FinslerConnection, ClassifierVerdicts) {
  SampleSpec spec;
  spec.x_box = Box({{-1.0, 1.0}, {0.5, 2.0}});
  const auto hyp = FinslerStructure::parse(kHyperbolic, 2);
  const HomogeneityReport hs = classify_homogeneity(finsler_semispray(hyp), spec);
  ASSERT_TRUE(hs.homogeneous());
  EXPECT_NEAR(hs.degree, 2.0, 1e-8);
  const ConnectionShapeReport sh = classify_connection_shape(finsler_connection(hyp), spec);
  ASSERT_TRUE(sh.vertical.homogeneous());
  EXPECT_NEAR(sh.vertical.degree, 1.0, 1e-8);
  // The zero section is excluded, so a = 0 is never tested.
  EXPECT_NE(sh.vertical.kind, HomogeneityKind::Complete);
  EXPECT_FALSE(sh.zero_preserving.has_value());
  EXPECT_LT(sh.zero_limit, 1e-5);
}

TEST(FinslerCausal, Classes) {
  const auto mink = FinslerStructure::parse("y1^2 - y2^2", 2);
  const Vec o{0, 0};
  EXPECT_EQ(causal_type(mink, o, Vec{1, 1}), CausalType::Null);
  EXPECT_EQ(causal_type(mink, o, Vec{2, 1}), CausalType::Spacelike);
  EXPECT_EQ(causal_type(mink, o, Vec{1, 2}), CausalType::Timelike);
  EXPECT_EQ(causal_type(mink, o, Vec{2, 1}, 1e-12, SignatureConvention::PositiveTimelike), CausalType::Timelike);
  const auto riem = FinslerStructure::parse("y1^2 + y2^2", 2);
  std::mt19937_64 rng(13);
  for (int s = 0; s < 100; ++s) EXPECT_NE(causal_type(riem, o, nonzero_fiber(rng)), CausalType::Null);
}

TEST(FinslerGeodesics, NullLineOfMinkowski) {
  const auto mink = FinslerStructure::parse("y1^2 - y2^2", 2);
  const SodeField s = finsler_semispray(mink);
  const Curve line = [](double t) { return CurveJet{{t, t}, {1.0, 1.0}, {0.0, 0.0}}; };
  const std::vector<double> ts{0.5, 1.0, 2.0, 3.0};
  EXPECT_EQ(geodesic_residual(s, line, ts), 0.0);
  EXPECT_EQ(causal_type(mink, Vec{1, 1}, Vec{1, 1}), CausalType::Null);
}

TEST(FinslerGeodesics, BasicFunctionIsConserved) {
  struct Case {
    const char* L;
    TangentPoint init;
  };
  const std::vector<Case> cases{
      {"(1 + x1^2)*y1^2 + sin(x1 + x2)*y1*y2 + (2 + cos(x2))*y2^2", TangentPoint({0.2, -0.1}, {0.3, 0.2})},
      {kHyperbolic, TangentPoint({0.0, 1.0}, {0.6, 0.3})},
      {"y1^2 - y2^2", TangentPoint({0.0, 0.0}, {0.5, 1.0})},
      {"y1^2 - (1 + x1^2)*y2^2", TangentPoint({0.1, 0.0}, {0.5, 0.2})},
  };
  for (const auto& c : cases) {
    const auto f = FinslerStructure::parse(c.L, 2);
    const Trajectory tr = integrate(finsler_semispray(f), c.init, 0.0, 5.0, FlowOptions::with_tolerances(1e-12, 1e-11));
    ASSERT_EQ(tr.cause(), Termination::Reached) << c.L;
    const double l0 = f.value(c.init.x, c.init.y);
    for (double t = 0.0; t <= 5.0; t += 0.05) {
      const CurveJet j = tr.jet(std::min(t, 5.0));
      EXPECT_NEAR(f.value(j.x, j.v), l0, 1e-6) << c.L << " t=" << t;
      EXPECT_EQ(causal_type(f, j.x, j.v, 1e-6), causal_type(f, c.init.x, c.init.y, 1e-6));
    }
  }
}

TEST(FinslerGeodesics, AgreesWithChristoffelFlow) {
  // Classical geodesic equation x'' = -chr(x)(x', x') by RK4 from metric
  // derivatives, compared at t = 5.
  const auto suite = metric_suite();
  const MetricCase& m = suite[2];
  const auto f = FinslerStructure::parse(m.L, 2);
  const TangentPoint init({0.2, -0.1}, {0.3, 0.2});
  auto rhs = [&m](const Vec& z) {
    const Vec a = tsup::christoffel_contraction(tsup::christoffel(m.g, {z[0], z[1]}), {z[2], z[3]});
    return Vec{z[2], z[3], a[0], a[1]};
  };
  Vec z{init.x[0], init.x[1], init.y[0], init.y[1]};
  const double h = 5e-3;
  for (int i = 0; i < 1000; ++i) {
    auto step = [&](const Vec& k, double s) {
      Vec r = z;
      for (std::size_t q = 0; q < 4; ++q) r[q] += s * k[q];
      return r;
    };
    const Vec k1 = rhs(z), k2 = rhs(step(k1, h / 2)), k3 = rhs(step(k2, h / 2)), k4 = rhs(step(k3, h));
    for (std::size_t q = 0; q < 4; ++q) z[q] += h / 6 * (k1[q] + 2 * k2[q] + 2 * k3[q] + k4[q]);
  }
  const Trajectory tr = integrate(finsler_semispray(f), init, 0.0, 5.0, FlowOptions::with_tolerances(1e-12, 1e-11));
  const TangentPoint e = tr.final_state();
  EXPECT_LT(inf_dist(e.x, {z[0], z[1]}), 1e-7);
  EXPECT_LT(inf_dist(e.y, {z[2], z[3]}), 1e-7);
}

TEST(FinslerGeodesics, ArclengthOfFlatLine) {
  const auto flat = FinslerStructure::parse("y1^2 + y2^2", 2);
  const Curve line = [](double t) { return CurveJet{{3 * t, 4 * t}, {3.0, 4.0}, {0.0, 0.0}}; };
  EXPECT_NEAR(finsler_length(flat, line, 0.0, 2.0), 10.0, 1e-12);
}
