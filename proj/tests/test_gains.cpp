#include <cmath>
#include <numbers>

#include <gtest/gtest.h>
#include <Eigen/Eigenvalues>

#include "tubempc/gains.hpp"
#include "tubempc/linearize.hpp"

using namespace tubempc;
using Eigen::MatrixXd;
using std::numbers::pi;

namespace {

ArmState initial_state() {
  const ArmParams p = ArmParams::Default();
  return state_from_angles(Eigen::Vector3d(pi - std::atan(0.5),
                                           pi - std::atan(2.0),
                                           std::atan(1.0 / 3.0)),
                           p);
}

// Positive root of b^2 p^2 + (r(1 - a^2) - q b^2) p - q r = 0.
double scalar_dare(double a, double b, double q, double r) {
  const double B = r * (1 - a * a) - q * b * b;
  return (-B + std::sqrt(B * B + 4 * b * b * q * r)) / (2 * b * b);
}

}  // namespace

TEST(Gains, DefaultWeights) {
  const CostWeights w = CostWeights::Default();
  EXPECT_TRUE(w.Q.isApprox(0.1 * MatrixXd::Identity(5, 5)));
  EXPECT_TRUE(w.R.isApprox(0.01 * MatrixXd::Identity(3, 3)));
  CostWeights bad = w;
  bad.R(0, 0) = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Gains, ScalarRiccatiClosedForm) {
  for (double a : {0.5, 1.0, 1.2, 2.0}) {
    MatrixXd A(1, 1), B(1, 1), Q(1, 1), R(1, 1);
    A << a;
    B << 0.3;
    Q << 0.1;
    R << 0.01;
    const GainSet g = solve_dare(A, B, Q, R);
    const double p = scalar_dare(a, 0.3, 0.1, 0.01);
    EXPECT_NEAR(g.P(0, 0), p, 1e-10 * p);
    EXPECT_NEAR(g.K(0, 0), -0.3 * p * a / (0.01 + 0.09 * p), 1e-9);
    EXPECT_LT(g.closed_loop_spectral_radius, 1.0);
  }
}

// Reference values from scipy.linalg.solve_discrete_are on the same model.
TEST(Gains, ArmRiccatiMatchesReference) {
  const ArmParams p = ArmParams::Default();
  const LinearizedModel m =
      linearize(initial_state(), ArmInput(0.1, -0.05, 0.08), p, 0.1);
  const CostWeights w = CostWeights::Default();
  const GainSet g = solve_dare(m.A, m.B, w.Q, w.R);
  const double diag[5] = {2.0235291639547595, 5.378745669129906,
                          29.884930897448093, 20.528380300145884,
                          38.9819944020353};
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(g.P(i, i), diag[i], 1e-7 * diag[i]);
  EXPECT_NEAR(g.P(0, 1), 1.8299731232263383, 1e-7);
  EXPECT_NEAR(g.P(2, 4), -31.36337139215876, 1e-6);
  const double k0[5] = {0.8132907281809669, 2.0486262773987414,
                        0.5899617662455854, 2.2820823972801247,
                        -4.093252212936231};
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(g.K(0, j), k0[j], 1e-7);
  EXPECT_NEAR(g.closed_loop_spectral_radius, 0.9937386259420677, 1e-9);
  EXPECT_LT(riccati_residual(m.A, m.B, w.Q, w.R, g.P), 1e-8);
}

TEST(Gains, ZeroInputAnchorIsNotStabilizable) {
  const ArmParams p = ArmParams::Default();
  const LinearizedModel m = linearize(initial_state(), ArmInput::Zero(), p, 0.1);
  EXPECT_FALSE(is_stabilizable(m.A, m.B));
  const CostWeights w = CostWeights::Default();
  EXPECT_THROW(solve_dare(m.A, m.B, w.Q, w.R), NotStabilizable);
}

TEST(Gains, StableSystemIsStabilizableWithoutInput) {
  MatrixXd A = 0.5 * MatrixXd::Identity(2, 2);
  MatrixXd B = MatrixXd::Zero(2, 1);
  EXPECT_TRUE(is_stabilizable(A, B));
  const GainSet g =
      solve_dare(A, B, MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1));
  // P solves P = A'PA + Q, i.e. P = I / (1 - 0.25).
  EXPECT_NEAR(g.P(0, 0), 1.0 / 0.75, 1e-12);
  EXPECT_TRUE(g.K.isZero(1e-12));
}

TEST(Gains, RejectsBadWeights) {
  MatrixXd A = MatrixXd::Identity(2, 2), B = MatrixXd::Identity(2, 2);
  EXPECT_THROW(solve_dare(A, B, -MatrixXd::Identity(2, 2),
                          MatrixXd::Identity(2, 2)),
               std::invalid_argument);
  EXPECT_THROW(solve_dare(A, B, MatrixXd::Identity(2, 2),
                          MatrixXd::Zero(2, 2)),
               std::invalid_argument);
}

TEST(Gains, RiccatiSolutionIsSymmetricPositiveDefinite) {
  const ArmParams p = ArmParams::Default();
  const CostWeights w = CostWeights::Default();
  for (double s : {0.2, 0.1, 0.05, 0.01}) {
    const LinearizedModel m =
        linearize(initial_state(), ArmInput(s, -s, s), p, 0.1);
    const GainSet g = solve_dare(m.A, m.B, w.Q, w.R);
    EXPECT_LT((g.P - g.P.transpose()).cwiseAbs().maxCoeff(), 1e-9 * g.P.norm());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(g.P);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    EXPECT_LT(g.closed_loop_spectral_radius, 1.0);
    EXPECT_LT(riccati_residual(m.A, m.B, w.Q, w.R, g.P), 1e-8);
  }
}

TEST(Gains, TerminalDecreaseAndRadius) {
  const ArmParams p = ArmParams::Default();
  const CostWeights w = CostWeights::Default();
  const ArmInput v(0.1, -0.05, 0.08);
  const ArmState x = initial_state();
  const LinearizedModel m = linearize(x, v, p, 0.1);
  GainSet g = solve_dare(m.A, m.B, w.Q, w.R);
  Box ub = p.input_box, sb = p.state_box;
  ub.lower -= v;
  ub.upper -= v;
  sb.lower -= x;
  sb.upper -= x;
  g.epsilon = terminal_radius(g, m.A, m.B, ub, sb);
  EXPECT_GT(g.epsilon, 0.0);
  const DecreaseReport rep = verify_terminal_decrease(g, m.A, m.B, w, 1000, 3);
  EXPECT_TRUE(rep.satisfied);
  EXPECT_LE(rep.max_slack, 1e-10);
  EXPECT_EQ(rep.samples, 1000);

  // Points of the set map the feedback into the input box.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(g.P);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 200; ++k) {
    const Eigen::VectorXd s = random_unit_vector(rng, 5);
    const Eigen::VectorXd e =
        es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
        es.eigenvectors().transpose() * s * g.epsilon;
    EXPECT_LE(ub.violation(g.K * e), 1e-9);
  }
}

TEST(Gains, TerminalRadiusCollapseThrows) {
  const ArmParams p = ArmParams::Default();
  const CostWeights w = CostWeights::Default();
  const LinearizedModel m =
      linearize(initial_state(), ArmInput(0.1, -0.05, 0.08), p, 0.1);
  const GainSet g = solve_dare(m.A, m.B, w.Q, w.R);
  Box ub = Box::Symmetric(Eigen::VectorXd::Zero(3));
  EXPECT_THROW(terminal_radius(g, m.A, m.B, ub, Box::Unbounded(5)),
               NumericalError);
}
