#include "tubempc/tube.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "tubempc/linearize.hpp"

namespace tubempc {

double max_eigenvalue_modulus(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) {
    throw std::invalid_argument("max_eigenvalue_modulus: matrix not square");
  }
  if (!A.allFinite()) {
    throw std::invalid_argument("max_eigenvalue_modulus: non-finite entries");
  }
  if (A.rows() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double deviation_bound(double lambda_bar, int steps, double eta) {
  if (steps < 0 || eta < 0.0) {
    throw std::invalid_argument("deviation_bound: steps and eta must be >= 0");
  }
  // Horner form of the geometric sum; exact at lambda_bar = 1.
  double sum = 0.0;
  for (int j = 0; j < steps; ++j) sum = lambda_bar * sum + 1.0;
  return sum * eta;
}

DisturbedStateSet predictive_state_set(const ArmState& nominal_prediction,
                                       double radius) {
  if (!(radius >= 0.0)) {
    throw std::invalid_argument("predictive_state_set: radius must be >= 0");
  }
  return DisturbedStateSet{nominal_prediction, radius};
}

namespace {

TightenedBox shrink(const Box& box, const Eigen::VectorXd& margin) {
  TightenedBox out{box, true, -1};
  for (int i = 0; i < box.size(); ++i) {
    if (std::isfinite(box.lower[i])) out.box.lower[i] += margin[i];
    if (std::isfinite(box.upper[i])) out.box.upper[i] -= margin[i];
    if (out.box.lower[i] > out.box.upper[i] && out.feasible) {
      out.feasible = false;
      out.infeasible_coordinate = i;
    }
  }
  return out;
}

}  // namespace

TightenedBox tighten_state_box(const Box& box, int step, double eta,
                               double l) {
  if (step < 0 || eta < 0.0 || l < -1.0) {
    throw std::invalid_argument("tighten_state_box: invalid arguments");
  }
  const double margin = step * eta * std::pow(1.0 + l, step);
  return shrink(box, Eigen::VectorXd::Constant(box.size(), margin));
}

TightenedBox tighten_input_box(const Box& box, const Eigen::MatrixXd& K,
                               double tube_radius) {
  if (tube_radius < 0.0) {
    throw std::invalid_argument("tighten_input_box: radius must be >= 0");
  }
  if (K.rows() != box.size()) {
    throw std::invalid_argument("tighten_input_box: K rows != box size");
  }
  return shrink(box, K.rowwise().norm() * tube_radius);
}

TubeProfile build_tube_profile(const Box& state_box, const Box& input_box,
                               const Eigen::MatrixXd& K, double lambda_bar,
                               double eta, int horizon, int interval_steps,
                               double tightening_l) {
  if (horizon < 0 || interval_steps < 0) {
    throw std::invalid_argument("build_tube_profile: negative step counts");
  }
  TubeProfile tube;
  tube.lambda_bar = lambda_bar;
  tube.eta = eta;
  for (int i = 0; i <= horizon; ++i) {
    tube.radii.push_back(deviation_bound(lambda_bar, i, eta));
    const auto t = tighten_state_box(state_box, i, eta, tightening_l);
    tube.state_boxes.push_back(t.box);
    if (!t.feasible && tube.feasible) {
      tube.feasible = false;
      tube.infeasible_step = i;
    }
  }
  const auto u = tighten_input_box(
      input_box, K, deviation_bound(lambda_bar, interval_steps, eta));
  tube.input_box = u.box;
  if (!u.feasible) {
    tube.feasible = false;
    tube.infeasible_step = 0;
  }
  return tube;
}

namespace {

double spectral_norm(const StateMatrix& M) {
  Eigen::SelfAdjointEigenSolver<StateMatrix> es(M.transpose() * M,
                                                Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

// Closed-loop deviation Jacobian with input saturation pattern bits.
StateMatrix transition(const ContinuousJacobians& J, const GainMatrix& K,
                       unsigned pattern, double dt) {
  GainMatrix dk = K;
  for (int i = 0; i < kInputDim; ++i) {
    if (!(pattern & (1u << i))) dk.row(i).setZero();
  }
  return StateMatrix::Identity() + dt * (J.A_c + J.B_c * dk);
}

// G_k = max over patterns of sum_{j<k} ||M_{k-1} ... M_{j+1}||.
double gain_sum_exact(const std::vector<std::vector<StateMatrix>>& M, int k) {
  if (k == 0) return 0.0;
  const int free_steps = k - 1;  // patterns of steps 1..k-1
  std::size_t combos = 1;
  for (int s = 0; s < free_steps; ++s) combos *= 8;
  double best = 0.0;
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t code = c;
    std::vector<unsigned> pat(k, 0);
    for (int s = 1; s < k; ++s) {
      pat[s] = static_cast<unsigned>(code % 8);
      code /= 8;
    }
    // Accumulate Phi(k, j+1) backwards from j = k-1.
    StateMatrix phi = StateMatrix::Identity();
    double sum = 1.0;
    for (int j = k - 2; j >= 0; --j) {
      phi = phi * M[j + 1][pat[j + 1]];
      sum += spectral_norm(phi);
    }
    best = std::max(best, sum);
  }
  return best;
}

double gain_sum_product(const std::vector<double>& worst_norm, int k) {
  if (k == 0) return 0.0;
  double sum = 1.0, prod = 1.0;
  for (int j = k - 2; j >= 0; --j) {
    prod *= worst_norm[j + 1];
    sum += prod;
  }
  return sum;
}

}  // namespace

IntervalCertificate certify_interval(const ArmParams& p, double dt,
                                     const std::vector<ArmState>& nominal_states,
                                     const std::vector<ArmInput>& nominal_inputs,
                                     const GainMatrix& K, int max_enumeration) {
  const int m = static_cast<int>(nominal_inputs.size());
  if (m < 1 || static_cast<int>(nominal_states.size()) < m) {
    throw std::invalid_argument("certify_interval: need m >= 1 states/inputs");
  }
  IntervalCertificate cert;
  cert.eta1 = p.eta1;
  cert.remainder_coefficient =
      deviation_remainder_coefficient(p, K, p.input_box);

  std::vector<std::vector<StateMatrix>> M(m);
  std::vector<double> worst(m, 0.0);
  for (int j = 0; j < m; ++j) {
    const auto J = jacobians(nominal_states[j], nominal_inputs[j], p);
    for (unsigned pat = 0; pat < 8; ++pat) {
      M[j].push_back(transition(J, K, pat, dt));
      worst[j] = std::max(worst[j], spectral_norm(M[j].back()));
    }
  }
  std::size_t combos = 1;
  bool exact = true;
  for (int s = 1; s < m; ++s) {
    combos *= 8;
    if (combos > static_cast<std::size_t>(max_enumeration)) exact = false;
  }
  cert.gain_sums.resize(m + 1);
  for (int k = 0; k <= m; ++k) {
    cert.gain_sums[k] =
        exact ? gain_sum_exact(M, k) : gain_sum_product(worst, k);
  }
  double g_inner = 0.0;
  for (int k = 0; k < m; ++k) g_inner = std::max(g_inner, cert.gain_sums[k]);

  // Smallest root of eta = eta1 + a eta^2.
  const double a = dt * cert.remainder_coefficient * g_inner * g_inner;
  const double disc = 1.0 - 4.0 * a * p.eta1;
  if (disc < 0.0) return cert;  // no certified fixed point
  cert.eta = 2.0 * p.eta1 / (1.0 + std::sqrt(disc));
  cert.eta2 = cert.remainder_coefficient * (g_inner * cert.eta) *
              (g_inner * cert.eta);

  // lambda with sum_{j<m} lambda^j = G_m, floored at the spectral radius.
  const double gm = cert.gain_sums[m];
  double lam = max_eigenvalue_modulus(M[0][7]);
  if (m >= 2) {
    double lo = 0.0, hi = std::max(1.0, gm);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (deviation_bound(mid, m, 1.0) < gm) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    lam = std::max(lam, hi);
  }
  cert.lambda_bar = lam;
  cert.radius = deviation_bound(lam, m, cert.eta);
  cert.certified = true;
  return cert;
}

}  // namespace tubempc
