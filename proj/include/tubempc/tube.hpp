#pragma once

#include <vector>

#include <Eigen/Core>

#include "tubempc/plant.hpp"

namespace tubempc {

/// Spectral radius (largest eigenvalue modulus) of a square matrix.
double max_eigenvalue_modulus(const Eigen::MatrixXd& A);

/// sum_{j < steps} lambda_bar^j * eta.
double deviation_bound(double lambda_bar, int steps, double eta);

/// 2-norm ball around the m-step nominal prediction.
struct DisturbedStateSet {
  ArmState center = ArmState::Zero();
  double radius = 0.0;

  bool contains(const ArmState& x, double tol = 0.0) const {
    return (x - center).norm() <= radius + tol;
  }
};

DisturbedStateSet predictive_state_set(const ArmState& nominal_prediction,
                                       double radius);

struct TightenedBox {
  Box box;
  bool feasible = true;
  /// First coordinate whose bounds crossed, -1 when feasible.
  int infeasible_coordinate = -1;
};

/// Moves every bounded coordinate inward by step * eta * (1 + l)^step.
TightenedBox tighten_state_box(const Box& box, int step, double eta, double l);

/// Moves input bound i inward by ||K_i||_2 * tube_radius, the largest
/// feedback correction K_i e over the ball ||e|| <= tube_radius.
TightenedBox tighten_input_box(const Box& box, const Eigen::MatrixXd& K,
                               double tube_radius);

struct TubeProfile {
  double lambda_bar = 0.0;
  double eta = 0.0;
  /// radii[i] = deviation_bound(lambda_bar, i, eta), i = 0..N.
  std::vector<double> radii;
  /// Tightened state boxes for steps 0..N.
  std::vector<Box> state_boxes;
  Box input_box;
  bool feasible = true;
  /// Horizon step of the first empty box; 0 refers to the input box.
  int infeasible_step = -1;
};

/// Tube for a horizon of N steps: state boxes tightened per step, inputs
/// tightened by the feedback margin over one handoff interval.
TubeProfile build_tube_profile(const Box& state_box, const Box& input_box,
                               const Eigen::MatrixXd& K, double lambda_bar,
                               double eta, int horizon, int interval_steps,
                               double tightening_l);

/// Certified deviation bound for one handoff interval.
///
/// The deviation e = x - x* between the real state and the nominal rollout
/// evolves as e+ = M_j e + dt r_j + w_j, where M_j is the closed-loop Jacobian
/// at (x*_j, v_j) with the input saturation pattern D_j, ||r_j|| <= c ||e_j||^2
/// and ||w_j|| <= eta1. Since e_0 = 0, ||e_k|| <= G_k eta with G_k the worst
/// case over saturation patterns of sum_j ||Phi(k, j+1)||, provided eta solves
/// eta = eta1 + dt c (max_{k<m} G_k eta)^2.
struct IntervalCertificate {
  bool certified = false;
  double eta1 = 0.0;
  /// Continuous remainder bound c * (max_k G_k eta)^2.
  double eta2 = 0.0;
  /// Per-step disturbance bound eta1 + dt * eta2.
  double eta = 0.0;
  /// Effective growth factor, at least the closed-loop spectral radius.
  double lambda_bar = 0.0;
  /// deviation_bound(lambda_bar, m, eta).
  double radius = 0.0;
  /// gain_sums[k] = G_k, k = 0..m.
  std::vector<double> gain_sums;
  double remainder_coefficient = 0.0;
};

/// nominal_states and nominal_inputs hold x*_j and v_j for j = 0..m-1; the
/// inputs must lie in the input box. Saturation patterns are enumerated
/// exactly while 8^(m-1) <= max_enumeration, otherwise a product bound of
/// per-step worst-case norms is used.
IntervalCertificate certify_interval(const ArmParams& p, double dt,
                                     const std::vector<ArmState>& nominal_states,
                                     const std::vector<ArmInput>& nominal_inputs,
                                     const GainMatrix& K,
                                     int max_enumeration = 4096);

}  // namespace tubempc
