#include "tubempc/gains.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "tubempc/plant.hpp"

namespace tubempc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

CostWeights CostWeights::Default() {
  CostWeights w;
  w.Q = 0.1 * MatrixXd::Identity(kStateDim, kStateDim);
  w.R = 0.01 * MatrixXd::Identity(kInputDim, kInputDim);
  return w;
}

void CostWeights::validate() const {
  if (Q.rows() != Q.cols() || R.rows() != R.cols() || Q.rows() == 0 ||
      R.rows() == 0) {
    throw std::invalid_argument("CostWeights: Q and R must be square");
  }
  if (!Q.isApprox(Q.transpose(), 1e-12) || !R.isApprox(R.transpose(), 1e-12)) {
    throw std::invalid_argument("CostWeights: Q and R must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eq(Q), er(R);
  if (eq.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, Q.norm())) {
    throw std::invalid_argument("CostWeights: Q must be positive semidefinite");
  }
  if (er.eigenvalues().minCoeff() <= 0.0) {
    throw std::invalid_argument("CostWeights: R must be positive definite");
  }
  if (!(slack_weight > 0.0)) {
    throw std::invalid_argument("CostWeights: slack_weight must be positive");
  }
}

bool is_stabilizable(const MatrixXd& A, const MatrixXd& B, double tolerance) {
  const int n = static_cast<int>(A.rows());
  Eigen::EigenSolver<MatrixXd> es(A, false);
  MatrixXd ab(n, n + B.cols());
  ab << A, B;
  const double scale = std::max(1.0, ab.norm());
  for (int i = 0; i < n; ++i) {
    const std::complex<double> lambda = es.eigenvalues()[i];
    if (std::abs(lambda) < 1.0 - 1e-12) continue;
    Eigen::MatrixXcd m(n, n + B.cols());
    m.leftCols(n) = A.cast<std::complex<double>>();
    m.leftCols(n).diagonal().array() -= lambda;
    m.rightCols(B.cols()) = B.cast<std::complex<double>>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
    if (svd.singularValues()[n - 1] <= tolerance * scale) return false;
  }
  return true;
}

double riccati_residual(const MatrixXd& A, const MatrixXd& B,
                        const MatrixXd& Q, const MatrixXd& R,
                        const MatrixXd& P) {
  const MatrixXd btpa = B.transpose() * P * A;
  const MatrixXd s = R + B.transpose() * P * B;
  const MatrixXd rhs =
      A.transpose() * P * A - btpa.transpose() * s.ldlt().solve(btpa) + Q;
  return (P - rhs).norm();
}

namespace {

double spectral_radius(const MatrixXd& M) {
  Eigen::EigenSolver<MatrixXd> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd gain_from(const MatrixXd& A, const MatrixXd& B, const MatrixXd& R,
                   const MatrixXd& P) {
  const MatrixXd s = R + B.transpose() * P * B;
  return -s.ldlt().solve(B.transpose() * P * A);
}

// X - Acl' X Acl = W, dense Kronecker solve.
MatrixXd solve_stein(const MatrixXd& Acl, const MatrixXd& W) {
  const int n = static_cast<int>(Acl.rows());
  const MatrixXd at = Acl.transpose();
  MatrixXd kron(n * n, n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      kron.block(i * n, j * n, n, n) = at(i, j) * at;
    }
  }
  MatrixXd lhs = MatrixXd::Identity(n * n, n * n) - kron;
  const VectorXd w = Eigen::Map<const VectorXd>(W.data(), n * n);
  const VectorXd x = lhs.partialPivLu().solve(w);
  MatrixXd X = Eigen::Map<const MatrixXd>(x.data(), n, n);
  return 0.5 * (X + X.transpose());
}

}  // namespace

GainSet solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                   const MatrixXd& R, const DareOptions& options) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw std::invalid_argument("solve_dare: inconsistent dimensions");
  }
  if (!A.allFinite() || !B.allFinite()) {
    throw std::invalid_argument("solve_dare: non-finite system matrices");
  }
  Eigen::LLT<MatrixXd> rllt(R);
  if (rllt.info() != Eigen::Success || !R.isApprox(R.transpose(), 1e-12)) {
    throw std::invalid_argument("solve_dare: R must be positive definite");
  }
  if (!Q.isApprox(Q.transpose(), 1e-12) ||
      Eigen::SelfAdjointEigenSolver<MatrixXd>(Q).eigenvalues().minCoeff() <
          -1e-12 * std::max(1.0, Q.norm())) {
    throw std::invalid_argument("solve_dare: Q must be positive semidefinite");
  }
  if (!is_stabilizable(A, B, options.stabilizability_tolerance)) {
    throw NotStabilizable("solve_dare: (A, B) is not stabilizable");
  }

  // Structured doubling: H_k increases monotonically to P.
  MatrixXd Ak = A;
  MatrixXd Gk = B * rllt.solve(B.transpose());
  MatrixXd Hk = Q;
  const MatrixXd I = MatrixXd::Identity(n, n);
  int it = 0;
  bool converged = false;
  for (; it < options.max_iterations; ++it) {
    const Eigen::PartialPivLU<MatrixXd> W(I + Gk * Hk);
    const MatrixXd WA = W.solve(Ak);
    const MatrixXd WG = W.solve(Gk);
    const MatrixXd Hn = Hk + Ak.transpose() * Hk * WA;
    Gk = Gk + Ak * WG * Ak.transpose();
    Ak = Ak * WA;
    const double change = (Hn - Hk).norm();
    Hk = 0.5 * (Hn + Hn.transpose());
    if (!Hk.allFinite()) break;
    if (change <= options.tolerance * std::max(1.0, Hk.norm())) {
      converged = true;
      ++it;
      break;
    }
  }
  if (!converged) {
    throw NumericalError("solve_dare: doubling iteration did not converge");
  }

  GainSet out;
  out.P = Hk;
  out.riccati_residual = riccati_residual(A, B, Q, R, out.P);
  // Newton (Hewer) polish: each step solves one Stein equation.
  for (int k = 0; k < 3; ++k) {
    const MatrixXd K = gain_from(A, B, R, out.P);
    const MatrixXd Acl = A + B * K;
    if (spectral_radius(Acl) >= 1.0) break;
    const MatrixXd Pn = solve_stein(Acl, Q + K.transpose() * R * K);
    const double res = riccati_residual(A, B, Q, R, Pn);
    if (!Pn.allFinite() || !(res < out.riccati_residual)) break;
    out.P = Pn;
    out.riccati_residual = res;
  }
  out.K = gain_from(A, B, R, out.P);
  out.iterations = it;
  out.closed_loop_spectral_radius = spectral_radius(A + B * out.K);
  if (!(out.closed_loop_spectral_radius < 1.0)) {
    std::ostringstream os;
    os << "solve_dare: closed loop not stable, spectral radius "
       << out.closed_loop_spectral_radius;
    throw NumericalError(os.str());
  }
  return out;
}

namespace {

// T with (T s)' P (T s) = s's, from the eigendecomposition of P.
MatrixXd inverse_transpose_factor(const MatrixXd& P) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(P);
  VectorXd ev = es.eigenvalues().cwiseMax(1e-300);
  return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal();
}

}  // namespace

DecreaseReport verify_terminal_decrease(const GainSet& gain, const MatrixXd& A,
                                        const MatrixXd& B,
                                        const CostWeights& weights,
                                        int sample_count, std::uint64_t seed,
                                        double tolerance) {
  const int n = static_cast<int>(A.rows());
  const MatrixXd Acl = A + B * gain.K;
  const MatrixXd Qstar = weights.Q + gain.K.transpose() * weights.R * gain.K;
  const MatrixXd T = inverse_transpose_factor(gain.P);
  const double eps = gain.epsilon > 0.0 ? gain.epsilon : 1.0;
  std::mt19937_64 engine(seed);
  DecreaseReport report;
  report.max_slack = -std::numeric_limits<double>::infinity();
  auto check = [&](const VectorXd& x) {
    const VectorXd xp = Acl * x;
    const double slack = xp.dot(gain.P * xp) - x.dot(gain.P * x) +
                         x.dot(Qstar * x);
    ++report.samples;
    if (slack > report.max_slack) report.max_slack = slack;
    if (slack > tolerance && report.satisfied) {
      report.satisfied = false;
      report.witness = x;
    }
  };
  check(VectorXd::Zero(n));
  for (int s = 1; s < sample_count; ++s) {
    const VectorXd dir = random_unit_vector(engine, n);
    const double r = eps * std::pow(random_uniform(engine), 1.0 / n);
    check(r * T * dir);
  }
  return report;
}

double terminal_radius(const GainSet& gain, const MatrixXd& A,
                       const MatrixXd& B, const Box& input_box,
                       const Box& state_box,
                       const TerminalRadiusOptions& options) {
  const int n = static_cast<int>(A.rows());
  if (input_box.size() != gain.K.rows() || state_box.size() != n) {
    throw std::invalid_argument("terminal_radius: box dimensions");
  }
  const MatrixXd Acl = A + B * gain.K;
  const MatrixXd T = inverse_transpose_factor(gain.P);
  std::mt19937_64 engine(options.seed);
  std::vector<VectorXd> unit;  // boundary points of the unit P-ball
  unit.reserve(options.samples);
  for (int s = 0; s < options.samples; ++s) {
    unit.push_back(T * random_unit_vector(engine, n));
  }
  auto admissible = [&](double eps) {
    for (const auto& d : unit) {
      const VectorXd x = eps * d;
      if (!state_box.contains(x)) return false;
      if (!input_box.contains(gain.K * x)) return false;
      const VectorXd xp = Acl * x;
      if (xp.dot(gain.P * xp) > eps * eps * (1.0 + 1e-12)) return false;
    }
    return true;
  };
  if (admissible(options.max_radius)) return options.max_radius;
  if (!admissible(options.min_radius)) {
    throw NumericalError("terminal_radius: terminal set is empty");
  }
  double lo = options.min_radius, hi = options.max_radius;
  for (int k = 0; k < options.bisection_steps; ++k) {
    const double mid = std::sqrt(lo * hi);  // geometric: spans many decades
    if (admissible(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace tubempc
