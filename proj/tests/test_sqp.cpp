#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "tubempc/ocp.hpp"
#include "tubempc/sqp.hpp"

using namespace tubempc;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using std::numbers::pi;

namespace {

NonlinearTrackingProblem linear_problem(const MatrixXd& A, const MatrixXd& B,
                                        const VectorXd& c, int N) {
  const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols());
  NonlinearTrackingProblem p;
  TrackingProblem& pb = p.base;
  pb.horizon = N;
  pb.initial_state = VectorXd::LinSpaced(n, 1.0, -1.0);
  pb.selector = MatrixXd::Identity(n, n);
  pb.Q = MatrixXd::Identity(n, n);
  pb.R = 0.1 * MatrixXd::Identity(m, m);
  pb.P = 3.0 * MatrixXd::Identity(n, n);
  for (int i = 0; i <= N; ++i) pb.reference.push_back(VectorXd::Constant(n, 0.2));
  Box sb = Box::Unbounded(n);
  sb.lower[0] = -0.9;
  sb.upper[0] = 1.5;
  pb.state_bounds.assign(N + 1, sb);
  pb.input_bounds = Box::Symmetric(VectorXd::Constant(m, 0.4));
  pb.terminal.enabled = true;
  pb.terminal.soft = true;
  pb.terminal.W = pb.P;
  pb.terminal.radius = 0.3;
  p.step = [A, B, c](const VectorXd& x, const VectorXd& u) {
    return VectorXd(A * x + B * u + c);
  };
  p.jacobian = [A, B](const VectorXd&, const VectorXd&, MatrixXd& Ao,
                      MatrixXd& Bo) {
    Ao = A;
    Bo = B;
  };
  return p;
}

}  // namespace

// On a linear plant the first SQP step is the QP itself.
TEST(Sqp, LinearPlantMatchesDirectQp) {
  MatrixXd A(3, 3);
  A << 1.0, 0.1, 0.0, 0.0, 1.0, 0.1, 0.0, 0.0, 0.95;
  MatrixXd B(3, 2);
  B << 0.0, 0.0, 0.1, 0.0, 0.0, 0.1;
  const VectorXd c = VectorXd::Constant(3, 0.01);
  const int N = 12;
  const NonlinearTrackingProblem p = linear_problem(A, B, c, N);
  AffineDynamics dyn;
  for (int i = 0; i < N; ++i) {
    dyn.A.push_back(A);
    dyn.B.push_back(B);
    dyn.offset.push_back(c);
  }
  const CondensedQp cq = condense(p.base, dyn);
  const QpSolution direct = solve_qp(cq.qp);
  ASSERT_EQ(direct.status, QpStatus::kOptimal);
  const auto u_qp = cq.inputs(direct.primal);

  const SqpResult r =
      solve_nlp_sqp(p, std::vector<VectorXd>(N, VectorXd::Zero(2)));
  ASSERT_EQ(r.status, SqpStatus::kConverged);
  ASSERT_TRUE(r.feasible);
  for (int i = 0; i < N; ++i) EXPECT_LE((r.inputs[i] - u_qp[i]).norm(), 1e-8);
  EXPECT_NEAR(r.cost, tracking_cost(p.base, cq.states(direct.primal), u_qp), 1e-8);
}

TEST(Sqp, RolloutAppliesStepFunction) {
  MatrixXd A = MatrixXd::Identity(2, 2), B = MatrixXd::Identity(2, 2);
  const NonlinearTrackingProblem p = linear_problem(A, B, VectorXd::Zero(2), 3);
  const auto xs = rollout(p, std::vector<VectorXd>(3, VectorXd::Ones(2)));
  ASSERT_EQ(xs.size(), 4u);
  EXPECT_LE((xs[3] - (p.base.initial_state + VectorXd::Constant(2, 3.0))).norm(),
            1e-15);
}

TEST(Sqp, RejectsWrongGuessLength) {
  MatrixXd A = MatrixXd::Identity(2, 2), B = MatrixXd::Identity(2, 2);
  const NonlinearTrackingProblem p = linear_problem(A, B, VectorXd::Zero(2), 3);
  EXPECT_THROW(solve_nlp_sqp(p, std::vector<VectorXd>(2, VectorXd::Zero(2))),
               std::invalid_argument);
}

TEST(Sqp, ArmProblemDecreasesMeritAndKeepsBounds) {
  const ArmParams params = ArmParams::Default();
  const HorizonConfig h = HorizonConfig::Default();
  const ArmState x0 = state_from_angles(
      Eigen::Vector3d(pi - std::atan(0.5), pi - std::atan(2.0), std::atan(1.0 / 3)),
      params);
  const ReferenceFn ref = [](int) { return Eigen::Vector2d(2.0, 6.0); };
  TerminalSpec term;
  term.enabled = false;
  const Ocp1 ocp = build_ocp1(params, x0, CostWeights::Default(), term, h,
                              reference_window(ref, 0, h.N), {params.eta1, 0.0});
  const SqpResult r = solve_nlp_sqp(
      ocp.problem, std::vector<VectorXd>(h.N, VectorXd::Zero(3)));
  ASSERT_TRUE(r.feasible);
  EXPECT_NE(r.status, SqpStatus::kInfeasible);
  for (std::size_t k = 1; k < r.merit_history.size(); ++k) {
    EXPECT_LT(r.merit_history[k], r.merit_history[k - 1]);
  }
  for (const auto& u : r.inputs) {
    EXPECT_LE(params.input_box.violation(u), 1e-9);
  }
  EXPECT_LE(state_violation(ocp.problem.base, r.states), 1e-6);
  // The end effector ends closer to the target than it started.
  EXPECT_LT((r.states.back().head<2>() - Eigen::Vector2d(2, 6)).norm(),
            (x0.head<2>() - Eigen::Vector2d(2, 6)).norm());
}
