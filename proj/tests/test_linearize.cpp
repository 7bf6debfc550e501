#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "tubempc/linearize.hpp"

using namespace tubempc;
using std::numbers::pi;

namespace {

struct Sampler {
  std::mt19937_64 rng;
  explicit Sampler(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * random_uniform(rng);
  }
  ArmState state() {
    ArmState x;
    x << uniform(-3, 3), uniform(0, 7), uniform(pi / 2, pi), uniform(0, pi),
        uniform(0, pi / 2);
    return x;
  }
  ArmInput input() {
    const double w = pi / 16;
    return ArmInput(uniform(-w, w), uniform(-w, w), uniform(-w, w));
  }
};

Eigen::Matrix<double, 5, 8> finite_difference_jacobian(const ArmState& x,
                                                       const ArmInput& u,
                                                       const ArmParams& p) {
  Eigen::Matrix<double, 5, 8> J;
  Eigen::Matrix<double, 8, 1> z;
  z << x, u;
  for (int j = 0; j < 8; ++j) {
    const double h = 1e-6;
    Eigen::Matrix<double, 8, 1> zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    J.col(j) = (dynamics(zp.head<5>(), zp.tail<3>(), p) -
                dynamics(zm.head<5>(), zm.tail<3>(), p)) /
               (2 * h);
  }
  return J;
}

}  // namespace

TEST(Linearize, JacobiansMatchFiniteDifferences) {
  const ArmParams p = ArmParams::Default();
  Sampler s(1);
  for (int k = 0; k < 100; ++k) {
    const ArmState x = s.state();
    const ArmInput u = s.input();
    const auto J = jacobians(x, u, p);
    const auto fd = finite_difference_jacobian(x, u, p);
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    EXPECT_LE((J.A_c - fd.leftCols<5>()).cwiseAbs().maxCoeff(), 1e-6 * scale);
    EXPECT_LE((J.B_c - fd.rightCols<3>()).cwiseAbs().maxCoeff(), 1e-6 * scale);
  }
}

TEST(Linearize, ZeroInputGivesZeroStateJacobian) {
  const ArmParams p = ArmParams::Default();
  const auto J = jacobians(Sampler(2).state(), ArmInput::Zero(), p);
  EXPECT_TRUE(J.A_c.isZero());
}

TEST(Linearize, VerticalLinksGiveHorizontalInputColumns) {
  const ArmParams p = ArmParams::Default();
  ArmState x;
  x << 0.0, 0.0, pi / 2, pi / 2, pi / 2;
  const auto J = jacobians(x, ArmInput::Zero(), p);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(J.B_c(kX, i), -p.link_lengths[i], 1e-15);
    EXPECT_NEAR(J.B_c(kY, i), 0.0, 1e-15);
    EXPECT_EQ(J.B_c(2 + i, i), 1.0);
  }
}

TEST(Linearize, DiscretizationIsEulerMatched) {
  const ArmParams p = ArmParams::Default();
  Sampler s(3);
  const auto J = jacobians(s.state(), s.input(), p);
  const auto D1 = discretize(J.A_c, J.B_c, 0.1);
  const auto D2 = discretize(J.A_c, J.B_c, 0.2);
  const StateMatrix I = StateMatrix::Identity();
  EXPECT_LE(((D2.A - I) - 2.0 * (D1.A - I)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((D2.B - 2.0 * D1.B).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(discretize(StateMatrix::Zero(), J.B_c, 0.1).A, I);
  EXPECT_THROW(discretize(J.A_c, J.B_c, 0.0), std::invalid_argument);
}

TEST(Linearize, OffsetReproducesDynamicsAtAnchor) {
  const ArmParams p = ArmParams::Default();
  Sampler s(4);
  for (int k = 0; k < 50; ++k) {
    const ArmState x = s.state();
    const ArmInput u = s.input();
    const LinearizedModel m = linearize(x, u, p, 0.1);
    EXPECT_LE(m.residual(x, u, p).norm(), 1e-12);
    EXPECT_LE((m.predict(x, u) - step_nominal(x, u, p, 0.1)).norm(), 1e-12);
  }
}

// One-step finite difference of the stepper against the discrete model.
TEST(Linearize, DiscreteModelMatchesStepperDerivative) {
  const ArmParams p = ArmParams::Default();
  Sampler s(5);
  const ArmState x = s.state();
  const ArmInput u = s.input();
  const LinearizedModel m = linearize(x, u, p, 0.1);
  for (int j = 0; j < 5; ++j) {
    ArmState e = ArmState::Zero();
    e[j] = 1e-6;
    const ArmState col =
        (step_nominal(x + e, u, p, 0.1) - step_nominal(x - e, u, p, 0.1)) / 2e-6;
    EXPECT_LE((col - m.A.col(j)).norm(), 1e-8);
  }
}

TEST(Linearize, HessianBoundDegenerateAndHomogeneous) {
  ArmParams p = ArmParams::Default();
  const Region region = admissible_region(p);
  const double base = hessian_bound(p, region);
  EXPECT_GT(base, 0.0);
  ArmParams doubled = p;
  doubled.link_lengths *= 2.0;
  EXPECT_NEAR(hessian_bound(doubled, region), 2.0 * base, 1e-12);
  ArmParams zero = p;
  zero.link_lengths.setZero();
  EXPECT_EQ(hessian_bound(zero, region), 0.0);
  Region open = region;
  open.input = Box::Unbounded(3);
  EXPECT_THROW(hessian_bound(p, open), std::invalid_argument);
}

// Second difference quotients along random directions stay below eta_H.
TEST(Linearize, HessianBoundDominatesSampledCurvature) {
  const ArmParams p = ArmParams::Default();
  const double eta_h = hessian_bound(p, admissible_region(p));
  Sampler s(6);
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const ArmState x = s.state();
    const ArmInput u = s.input();
    const Eigen::VectorXd d = random_unit_vector(rng, 8);
    const double h = 1e-4;
    const ArmState dx = d.head<5>() * h;
    const ArmInput du = d.tail<3>() * h;
    const ArmState second = (dynamics(x + dx, u + du, p) - 2 * dynamics(x, u, p) +
                             dynamics(x - dx, u - du, p)) /
                            (h * h);
    worst = std::max(worst, second.norm());
  }
  EXPECT_LE(worst, eta_h);
}

TEST(Linearize, ErrorBoundExamples) {
  const LipschitzConstants unit{1.0, 1.0};
  EXPECT_EQ(linearization_error_bound(1.0, unit, 0.0, 0.0), 0.0);
  EXPECT_NEAR(linearization_error_bound(1.0, unit, 0.1, 0.2), 0.3, 1e-15);
  EXPECT_NEAR(linearization_error_bound(1.0, unit, 0.1, 0.2, 0.05), 0.35, 1e-15);
  EXPECT_THROW(linearization_error_bound(1.0, unit, -0.1, 0.0),
               std::invalid_argument);
  EXPECT_EQ(total_disturbance(0.0, 0.0), 0.0);
  EXPECT_NEAR(total_disturbance(0.01, 0.3), 0.31, 1e-15);
  EXPECT_THROW(total_disturbance(-1.0, 0.0), std::invalid_argument);
}

TEST(Linearize, ErrorBoundIsMonotone) {
  std::mt19937_64 rng(8);
  auto u = [&] { return random_uniform(rng); };
  for (int k = 0; k < 1000; ++k) {
    const double eh = u(), l1 = u(), l2 = u(), dx = u(), du = u(), om = u();
    const double base = linearization_error_bound(eh, {l1, l2}, dx, du, om);
    const double bump = 0.1 * u();
    EXPECT_GE(linearization_error_bound(eh + bump, {l1, l2}, dx, du, om), base);
    EXPECT_GE(linearization_error_bound(eh, {l1 + bump, l2}, dx, du, om), base);
    EXPECT_GE(linearization_error_bound(eh, {l1, l2 + bump}, dx, du, om), base);
    EXPECT_GE(linearization_error_bound(eh, {l1, l2}, dx + bump, du, om), base);
    EXPECT_GE(linearization_error_bound(eh, {l1, l2}, dx, du + bump, om), base);
    EXPECT_GE(linearization_error_bound(eh, {l1, l2}, dx, du, om + bump), base);
  }
}

TEST(Linearize, ResidualStaysBelowErrorBound) {
  const ArmParams p = ArmParams::Default();
  const Region region = admissible_region(p);
  const double eta_h = hessian_bound(p, region);
  const LipschitzConstants lip = lipschitz_constants(p, region);
  Sampler s(9);
  std::mt19937_64 rng(10);
  const double dx_r = 0.05, du_r = 0.1;
  const double eta2 = linearization_error_bound(eta_h, lip, dx_r, du_r);
  for (int a = 0; a < 5; ++a) {
    const ArmState xa = s.state();
    const ArmInput ua = s.input();
    const LinearizedModel m = linearize(xa, ua, p, 0.1);
    for (int k = 0; k < 2000; ++k) {
      const ArmState x =
          xa + dx_r * random_uniform(rng) * ArmState(random_unit_vector(rng, 5));
      const ArmInput u =
          ua + du_r * random_uniform(rng) * ArmInput(random_unit_vector(rng, 3));
      EXPECT_LE(m.residual(x, u, p).norm(), eta2);
    }
  }
}

TEST(Linearize, RemainderCoefficientGrowsWithGain) {
  const ArmParams p = ArmParams::Default();
  const double c0 =
      deviation_remainder_coefficient(p, GainMatrix::Zero(), p.input_box);
  EXPECT_NEAR(c0, 0.5 * (pi / 16) * p.link_lengths.sum(), 1e-14);
  GainMatrix K = GainMatrix::Zero();
  K(0, 2) = 1.0;
  EXPECT_NEAR(deviation_remainder_coefficient(p, K, p.input_box),
              c0 + p.link_lengths[0], 1e-14);
}
