#include "ldpms/action.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ldpms;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

CoefficientField diag_sigma(double s0, double s1) {
  Mat s = Mat::Zero(2, 2);
  s.diagonal() << s0, s1;
  return CoefficientField(2, fields::constant_matrix(s), fields::zero_vector(2), fields::zero_vector(2),
                          fields::zero_kernel(2));
}

}  // namespace

TEST(V1, StraightLineGaussian) {
  const auto psi = LatticePath::straight(3.0, 30, v2(1.0, -1.0), v2(2.0, 1.0));
  EXPECT_NEAR(v1_energy(gaussian_field(2), LevyMeasure{}, psi), 5.0 / 6.0, 1e-14);
}

TEST(V1, DriftFollowingPathIsFree) {
  const Vec v = v2(0.3, 0.9);
  const CoefficientField f(2, fields::identity(2), fields::zero_vector(2), fields::constant_vector(v),
                           fields::zero_kernel(2));
  EXPECT_LT(v1_energy(f, LevyMeasure{}, LatticePath::straight(2.0, 8, Vec::Zero(2), 2.0 * v)), 1e-28);
}

TEST(V1, AnisotropicHandComputation) {
  // a = diag(4, 1): (1/2)(1/4 + 1)
  EXPECT_NEAR(v1_energy(diag_sigma(2.0, 1.0), LevyMeasure{}, LatticePath::straight(1.0, 10, Vec::Zero(2), v2(1, 1))),
              0.625, 1e-14);
}

TEST(V1, DriftSignConventions) {
  // c = 0, kbar = 0.5 y0 with k(x, y) = y
  const CoefficientField f(1, fields::identity(1), fields::zero_vector(1), fields::zero_vector(1),
                           fields::linear_mark(1.0));
  const LevyMeasure nu({{Vec::Constant(1, 1.0), 0.5}});
  const auto still = LatticePath::straight(1.0, 4, Vec::Zero(1), Vec::Zero(1));
  // residual 0 - (0 - 0.5) under c_minus_kbar, 0 - (0 + 0.5) under c_plus_kbar: both cost 0.125
  EXPECT_NEAR(v1_energy(f, nu, still, DriftSign::c_minus_kbar), 0.125, 1e-15);
  EXPECT_NEAR(v1_energy(f, nu, still, DriftSign::c_plus_kbar), 0.125, 1e-15);
  // moving at -0.5 follows c - kbar
  const auto follow = LatticePath::straight(1.0, 4, Vec::Zero(1), Vec::Constant(1, -0.5));
  EXPECT_LT(v1_energy(f, nu, follow, DriftSign::c_minus_kbar), 1e-30);
  EXPECT_NEAR(v1_energy(f, nu, follow, DriftSign::c_plus_kbar), 0.5, 1e-15);
}

TEST(V1, ZeroOnlyWhenFollowingEffectiveDrift) {
  const CoefficientField f(
      1, fields::identity(1), fields::zero_vector(1),
      [](const Vec& x) -> Vec { return Vec::Constant(1, 0.3 * std::sin(2 * std::numbers::pi * x[0])); },
      fields::zero_kernel(1));
  // Euler path of the drift itself has zero residual at every left node
  std::vector<Vec> nodes{Vec::Constant(1, 0.1)};
  const double h = 0.05;
  for (int j = 0; j < 20; ++j) nodes.push_back(nodes.back() + h * f.c(nodes.back()));
  EXPECT_LT(v1_energy(f, LevyMeasure{}, LatticePath(1.0, nodes)), 1e-12);
  nodes[10][0] += 1e-3;
  EXPECT_GT(v1_energy(f, LevyMeasure{}, LatticePath(1.0, nodes)), 1e-12);
}

TEST(V1, FastDriftDiagnostic) {
  const CoefficientField f(1, fields::identity(1), fields::constant_vector(Vec::Constant(1, 1.0)),
                           fields::zero_vector(1), fields::zero_kernel(1));
  const auto still = LatticePath::straight(1.0, 4, Vec::Zero(1), Vec::Zero(1));
  EXPECT_EQ(v1_energy(f, LevyMeasure{}, still), 0.0);
  V1Options opts;
  opts.fast_drift = ScaleRegime(0.1, 0.2);  // eps/delta = 0.5
  EXPECT_NEAR(v1_energy(f, LevyMeasure{}, still, opts), 0.125, 1e-15);
}

TEST(V1, RefinementConsistency) {
  const CoefficientField f(
      2, fields::identity(2), fields::zero_vector(2),
      [](const Vec& x) -> Vec { return v2(0.5 * std::sin(2 * std::numbers::pi * x[0]), 0.2 * std::cos(2 * std::numbers::pi * x[1])); },
      fields::zero_kernel(2));
  auto make = [](std::size_t n) {
    std::vector<Vec> nodes;
    for (std::size_t j = 0; j <= n; ++j) {
      const double t = 2.0 * static_cast<double>(j) / static_cast<double>(n);
      nodes.push_back(v2(std::sin(t), 0.3 * t * t));
    }
    return LatticePath(2.0, nodes);
  };
  const double e1 = v1_energy(f, LevyMeasure{}, make(320));
  const double e2 = v1_energy(f, LevyMeasure{}, make(640));
  const double e3 = v1_energy(f, LevyMeasure{}, make(1280));
  const double e4 = v1_energy(f, LevyMeasure{}, make(2560));
  EXPECT_NEAR((e1 - e2) / (e2 - e3), 2.0, 0.2);
  EXPECT_NEAR((e2 - e3) / (e3 - e4), 2.0, 0.1);
}

TEST(V1, SingularDiffusionIsAnError) {
  EXPECT_THROW(v1_energy(diag_sigma(1.0, 0.0), LevyMeasure{}, LatticePath::straight(1.0, 2, Vec::Zero(2), v2(1, 1))),
               AssumptionViolation);
}

TEST(V2, ClosedForms) {
  const LevyMeasure nu({{Vec::Constant(1, 1.0), 1.0}});
  EXPECT_EQ(v2_energy(JumpIntensityField::zero(5, 1), nu, 1.0), 0.0);
  EXPECT_NEAR(v2_energy_from_intensity(Mat::Constant(5, 1, std::exp(1.0)), nu, 1.0), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(v2_energy_from_intensity(Mat::Zero(5, 1), nu, 1.0), 1.0);
  EXPECT_THROW(v2_energy_from_intensity(Mat::Constant(5, 1, -0.1), nu, 1.0), DomainError);
}

TEST(V2, ConvexInIntensity) {
  const LevyMeasure nu({{Vec::Constant(1, 1.0), 0.4}, {Vec::Constant(1, 2.0), 1.1}});
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    Mat a(4, 2), b(4, 2);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a(i) = u(gen);
      b(i) = u(gen);
    }
    const double fa = v2_energy_from_intensity(a, nu, 2.0), fb = v2_energy_from_intensity(b, nu, 2.0);
    EXPECT_LE(v2_energy_from_intensity(0.5 * (a + b), nu, 2.0), 0.5 * (fa + fb) + 1e-12);
  }
}

TEST(V2, MatchesDirectSum) {
  const LevyMeasure nu({{Vec::Constant(1, 1.0), 0.4}, {Vec::Constant(1, 2.0), 1.1}});
  Mat g(3, 2);
  g << 0.5, 2.0, 1.0, 0.0, 3.0, 1.5;
  double expect = 0.0;
  const double w[2] = {0.4, 1.1};
  for (int n = 0; n < 3; ++n)
    for (int a = 0; a < 2; ++a) expect += (1.5 / 3.0) * w[a] * oracle::entropy(g(n, a));
  EXPECT_NEAR(v2_energy_from_intensity(g, nu, 1.5), expect, 1e-14);
}

TEST(Q1, Examples) {
  EXPECT_DOUBLE_EQ(q1_conjugate(Mat::Identity(2, 2), v2(3, 4)), 25.0);
  Mat a = Mat::Zero(2, 2);
  a.diagonal() << 4.0, 1.0;
  EXPECT_NEAR(q1_conjugate(a, v2(2, 1)), 2.0, 1e-15);
  EXPECT_EQ(q1_conjugate(a, Vec::Zero(2)), 0.0);
}

TEST(Q1, RejectsNonSpd) {
  Mat a(2, 2);
  a << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(q1_conjugate(a, v2(1, 0)), DomainError);
  a << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(q1_conjugate(a, v2(1, 0)), DomainError);
}

TEST(Q1, EqualsSupremumOracle) {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> n;
  for (int d = 1; d <= 3; ++d) {
    for (int trial = 0; trial < 20; ++trial) {
      Mat m(d, d);
      Vec v(d);
      for (int i = 0; i < d; ++i) {
        v[i] = n(gen);
        for (int j = 0; j < d; ++j) m(i, j) = n(gen);
      }
      const Mat a = m * m.transpose() + 0.2 * Mat::Identity(d, d);
      std::vector<double> flat(a.data(), a.data() + d * d), vv(v.data(), v.data() + d);
      EXPECT_NEAR(q1_conjugate(a, v), oracle::q1_sup(flat, vv), 1e-6 * std::max(1.0, q1_conjugate(a, v)));
    }
  }
}

TEST(Q2, Examples) {
  EXPECT_EQ(q2_conjugate(1.0), 0.0);
  EXPECT_NEAR(q2_conjugate(std::exp(1.0)), 1.0, 1e-15);
  EXPECT_EQ(q2_conjugate(0.0), 1.0);
  EXPECT_THROW(q2_conjugate(-0.5), DomainError);
}

TEST(Action, ReportBreakdownSumsToTotal) {
  const LevyMeasure nu({{v2(1.0, 0.0), 1.0}});
  const CoefficientField f(2, fields::identity(2), fields::zero_vector(2), fields::zero_vector(2),
                           fields::linear_mark(1.0));
  const auto psi = LatticePath::straight(1.0, 5, Vec::Zero(2), v2(1.0, 0.5));
  const auto phi = JumpIntensityField::constant(5, 1, 0.3);
  const auto report = action_report(f, nu, psi, phi);
  double s = 0.0;
  for (const auto& x : report.at("v1_per_interval")) s += x.get<double>();
  EXPECT_NEAR(s, report.at("v1").get<double>(), 1e-14);
  const auto value = action_value(f, nu, psi, phi);
  EXPECT_NEAR(report.at("total").get<double>(), value.total(), 1e-14);
  EXPECT_GE(value.v1, 0.0);
  EXPECT_GE(value.v2, 0.0);
}

TEST(LatticePathTest, Validation) {
  EXPECT_THROW(LatticePath(1.0, {Vec::Zero(1)}), InputError);
  EXPECT_THROW(LatticePath(0.0, {Vec::Zero(1), Vec::Zero(1)}), DomainError);
  const auto p = LatticePath::straight(2.0, 4, Vec::Zero(1), Vec::Constant(1, 4.0));
  EXPECT_DOUBLE_EQ(p.at(1.25)[0], 2.5);
  EXPECT_DOUBLE_EQ(p.velocity(3)[0], 2.0);
}
