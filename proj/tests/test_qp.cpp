#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "tubempc/condensed.hpp"
#include "tubempc/qp.hpp"

using namespace tubempc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Random MPC-shaped QP: double integrator chains, input and state boxes.
QpProblem random_mpc_qp(std::mt19937_64& rng, int N) {
  std::normal_distribution<double> nd;
  const int n = 4, m = 2;
  TrackingProblem pb;
  pb.horizon = N;
  pb.initial_state = VectorXd(n);
  for (int i = 0; i < n; ++i) pb.initial_state[i] = 0.3 * nd(rng);
  pb.selector = MatrixXd::Identity(n, n);
  pb.Q = MatrixXd::Identity(n, n) * (0.5 + std::abs(nd(rng)));
  pb.R = MatrixXd::Identity(m, m) * (0.01 + 0.1 * std::abs(nd(rng)));
  pb.P = pb.Q * 5.0;
  for (int i = 0; i <= N; ++i) pb.reference.push_back(VectorXd::Zero(n));
  Box sb = Box::Unbounded(n);
  sb.lower[0] = -3.0;
  sb.upper[0] = 3.0;
  sb.lower[2] = -3.0;
  sb.upper[2] = 3.0;
  pb.state_bounds.assign(N + 1, sb);
  pb.input_bounds = Box::Symmetric(VectorXd::Constant(m, 0.3 + 0.5 * std::abs(nd(rng))));
  pb.terminal.enabled = true;
  pb.terminal.soft = true;
  pb.terminal.W = pb.P;
  pb.terminal.radius = 0.5;
  AffineDynamics dyn;
  for (int i = 0; i < N; ++i) {
    MatrixXd A = MatrixXd::Identity(n, n);
    A(0, 1) = A(2, 3) = 0.1;
    A += 0.005 * MatrixXd::NullaryExpr(n, n, [&] { return nd(rng); });
    MatrixXd B = MatrixXd::Zero(n, m);
    B(1, 0) = B(3, 1) = 0.1;
    dyn.A.push_back(A);
    dyn.B.push_back(B);
    dyn.offset.push_back(0.001 * VectorXd::NullaryExpr(n, [&] { return nd(rng); }));
  }
  return condense(pb, dyn).qp;
}

}  // namespace

TEST(Qp, UnconstrainedMinimum) {
  QpProblem qp;
  qp.H = MatrixXd::Identity(2, 2) * 2.0;
  qp.g = VectorXd::Constant(2, -2.0);
  qp.C = MatrixXd::Zero(0, 2);
  qp.lower = qp.upper = VectorXd::Zero(0);
  const QpSolution s = solve_qp(qp);
  EXPECT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_NEAR(s.primal[0], 1.0, 1e-7);
  EXPECT_NEAR(s.objective, -2.0, 1e-7);
}

// min (x - 2)^2 + (y - 2)^2 subject to x + y <= 1 has x = y = 1/2 and
// multiplier 3 on the active upper bound.
TEST(Qp, ActiveConstraintAndMultiplierSign) {
  QpProblem qp;
  qp.H = MatrixXd::Identity(2, 2) * 2.0;
  qp.g = VectorXd::Constant(2, -4.0);
  qp.C = MatrixXd::Ones(1, 2);
  qp.lower = VectorXd::Constant(1, -kInf);
  qp.upper = VectorXd::Constant(1, 1.0);
  const QpSolution s = solve_qp(qp);
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_NEAR(s.primal[0], 0.5, 1e-9);
  EXPECT_NEAR(s.primal[1], 0.5, 1e-9);
  EXPECT_NEAR(s.dual[0], 3.0, 1e-7);
  EXPECT_LE(kkt_residuals(qp, s.primal, s.dual).max(), 1e-9);
}

TEST(Qp, EqualityConstraint) {
  QpProblem qp;
  qp.H = MatrixXd::Identity(3, 3);
  qp.g = VectorXd::Zero(3);
  qp.C = MatrixXd::Ones(1, 3);
  qp.lower = qp.upper = VectorXd::Constant(1, 3.0);
  const QpSolution s = solve_qp(qp);
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(s.primal[i], 1.0, 1e-8);
}

TEST(Qp, DetectsPrimalInfeasibility) {
  QpProblem qp;
  qp.H = MatrixXd::Identity(1, 1);
  qp.g = VectorXd::Zero(1);
  qp.C = MatrixXd::Ones(2, 1);
  qp.lower = Eigen::Vector2d(2.0, -kInf);
  qp.upper = Eigen::Vector2d(kInf, 1.0);
  EXPECT_EQ(solve_qp(qp).status, QpStatus::kInfeasible);
}

TEST(Qp, RejectsInvalidProblems) {
  QpProblem qp;
  qp.H = MatrixXd::Identity(2, 2);
  qp.H(0, 1) = 1.0;
  qp.g = VectorXd::Zero(2);
  qp.C = MatrixXd::Zero(0, 2);
  qp.lower = qp.upper = VectorXd::Zero(0);
  EXPECT_THROW(solve_qp(qp), std::invalid_argument);
  qp.H = -MatrixXd::Identity(2, 2);
  EXPECT_THROW(qp.validate(true), std::invalid_argument);
  qp.H = MatrixXd::Identity(2, 2);
  qp.C = MatrixXd::Ones(1, 2);
  qp.lower = VectorXd::Constant(1, 1.0);
  qp.upper = VectorXd::Constant(1, 0.0);
  EXPECT_THROW(solve_qp(qp), std::invalid_argument);
}

TEST(Qp, RandomMpcInstancesSatisfyKkt) {
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 20; ++k) {
    const QpProblem qp = random_mpc_qp(rng, 15);
    const QpSolution s = solve_qp(qp);
    ASSERT_EQ(s.status, QpStatus::kOptimal) << "instance " << k;
    EXPECT_LE(kkt_residuals(qp, s.primal, s.dual).max(), 1e-6) << "instance " << k;
  }
}

TEST(Qp, WarmStartFromSolutionConvergesQuickly) {
  std::mt19937_64 rng(7);
  const QpProblem qp = random_mpc_qp(rng, 15);
  const QpSolution cold = solve_qp(qp);
  ASSERT_EQ(cold.status, QpStatus::kOptimal);
  const WarmStart ws{cold.primal, cold.dual};
  const QpSolution warm = solve_qp(qp, &ws);
  ASSERT_EQ(warm.status, QpStatus::kOptimal);
  EXPECT_LE(warm.iterations, cold.iterations);
  EXPECT_NEAR(warm.objective, cold.objective, 1e-7 * (1 + std::abs(cold.objective)));
}

TEST(Qp, TextRoundTrip) {
  std::mt19937_64 rng(1);
  const QpProblem qp = random_mpc_qp(rng, 4);
  std::stringstream ss;
  write_qp(ss, qp);
  const QpProblem back = read_qp(ss);
  EXPECT_EQ(back.H, qp.H);
  EXPECT_EQ(back.g, qp.g);
  EXPECT_EQ(back.C, qp.C);
  EXPECT_EQ(back.lower, qp.lower);
  EXPECT_EQ(back.upper, qp.upper);
  std::istringstream bad("qp 2 1\n1 0");
  EXPECT_THROW(read_qp(bad), std::runtime_error);
}

TEST(Condensed, ReferenceDimensions) {
  // Arm layout: 30 steps, 3 inputs, 3 bounded angles, soft terminal box.
  const int N = 30;
  TrackingProblem pb;
  pb.horizon = N;
  pb.initial_state = VectorXd::Zero(5);
  pb.selector = MatrixXd::Zero(5, 5);
  pb.selector(0, 0) = pb.selector(1, 1) = 1.0;
  pb.Q = 0.1 * MatrixXd::Identity(5, 5);
  pb.R = 0.01 * MatrixXd::Identity(3, 3);
  pb.P = pb.Q;
  for (int i = 0; i <= N; ++i) pb.reference.push_back(VectorXd::Zero(5));
  Box sb = Box::Unbounded(5);
  for (int i = 2; i < 5; ++i) {
    sb.lower[i] = -1.0;
    sb.upper[i] = 1.0;
  }
  pb.state_bounds.assign(N + 1, sb);
  pb.input_bounds = Box::Symmetric(VectorXd::Constant(3, 0.2));
  pb.terminal.enabled = true;
  pb.terminal.soft = true;
  pb.terminal.W = pb.selector.transpose() * pb.P * pb.selector;
  pb.terminal.radius = 0.1;
  AffineDynamics dyn;
  for (int i = 0; i < N; ++i) {
    dyn.A.push_back(MatrixXd::Identity(5, 5));
    MatrixXd B = MatrixXd::Zero(5, 3);
    B.bottomRows(3) = 0.1 * MatrixXd::Identity(3, 3);
    dyn.B.push_back(B);
    dyn.offset.push_back(VectorXd::Zero(5));
  }
  const CondensedQp cq = condense(pb, dyn);
  EXPECT_EQ(cq.qp.num_variables(), 91);
  EXPECT_EQ(cq.qp.num_constraints(), 185);
  EXPECT_EQ(cq.slack_index, 90);
  EXPECT_EQ(cq.input_rows, 90);
  EXPECT_EQ(cq.state_rows, 90);
}

// Predicted states follow the affine recursion for any input sequence.
TEST(Condensed, StateMapMatchesRecursion) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  const int N = 6, n = 3, m = 2;
  TrackingProblem pb;
  pb.horizon = N;
  pb.initial_state = VectorXd::NullaryExpr(n, [&] { return nd(rng); });
  pb.selector = MatrixXd::Identity(n, n);
  pb.Q = pb.P = MatrixXd::Identity(n, n);
  pb.R = MatrixXd::Identity(m, m);
  for (int i = 0; i <= N; ++i) pb.reference.push_back(VectorXd::Zero(n));
  pb.state_bounds.assign(N + 1, Box::Unbounded(n));
  pb.input_bounds = Box::Symmetric(VectorXd::Ones(m));
  AffineDynamics dyn;
  for (int i = 0; i < N; ++i) {
    dyn.A.push_back(MatrixXd::NullaryExpr(n, n, [&] { return nd(rng); }));
    dyn.B.push_back(MatrixXd::NullaryExpr(n, m, [&] { return nd(rng); }));
    dyn.offset.push_back(VectorXd::NullaryExpr(n, [&] { return nd(rng); }));
  }
  const CondensedQp cq = condense(pb, dyn);
  const VectorXd z = VectorXd::NullaryExpr(cq.qp.num_variables(), [&] { return nd(rng); });
  const auto xs = cq.states(z);
  const auto us = cq.inputs(z);
  VectorXd x = pb.initial_state;
  for (int i = 0; i < N; ++i) {
    EXPECT_LE((xs[i] - x).norm(), 1e-12);
    x = dyn.A[i] * x + dyn.B[i] * us[i] + dyn.offset[i];
  }
  EXPECT_LE((xs[N] - x).norm(), 1e-10);
  EXPECT_NEAR(cq.qp.objective(z) + cq.cost_constant,
              tracking_cost(pb, xs, us), 1e-9 * (1 + tracking_cost(pb, xs, us)));
}
