#pragma once

#include <vector>

#include <Eigen/Core>

#include "tubempc/qp.hpp"
#include "tubempc/types.hpp"

namespace tubempc {

/// Terminal requirement ||S (x_N - r_N)||_W <= radius, imposed as the box
/// inscribed in that ellipsoid in the eigen-coordinates of W.
struct TerminalConstraint {
  bool enabled = false;
  bool soft = true;
  Eigen::MatrixXd W;
  double radius = 0.0;
};

/// Finite-horizon tracking problem over affine time-varying dynamics
/// x_{i+1} = A_i x_i + B_i u_i + d_i:
///   sum_{i<N} (|S(x_i - r_i)|_Q^2 + |u_i|_R^2) + |S(x_N - r_N)|_P^2
///   + slack_weight * s
/// with input bounds, per-step state bounds for i = 1..N and an optional
/// terminal constraint softened by s >= 0.
struct TrackingProblem {
  int horizon = 0;
  Eigen::VectorXd initial_state;
  Eigen::MatrixXd selector;  ///< S
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd P;
  std::vector<Eigen::VectorXd> reference;  ///< N + 1 entries
  std::vector<Box> state_bounds;           ///< N + 1 entries, [0] unused
  Box input_bounds;
  TerminalConstraint terminal;
  double slack_weight = 1e4;

  int state_dim() const { return static_cast<int>(initial_state.size()); }
  int input_dim() const { return static_cast<int>(R.rows()); }
  void validate() const;
};

struct AffineDynamics {
  std::vector<Eigen::MatrixXd> A;
  std::vector<Eigen::MatrixXd> B;
  std::vector<Eigen::VectorXd> offset;
};

/// Condensed QP in z = (u_0, ..., u_{N-1}, s). The states are
/// X = state_map * U + state_offset, stacked for i = 0..N.
struct CondensedQp {
  QpProblem qp;
  Eigen::MatrixXd state_map;
  Eigen::VectorXd state_offset;
  /// Objective of the tracking problem = qp.objective(z) + cost_constant.
  double cost_constant = 0.0;
  int horizon = 0;
  int state_dim = 0;
  int input_dim = 0;
  int slack_index = -1;
  /// Constraint row ranges, for diagnostics.
  int input_rows = 0;
  int state_rows = 0;
  int terminal_rows = 0;

  std::vector<Eigen::VectorXd> inputs(const Eigen::VectorXd& z) const;
  std::vector<Eigen::VectorXd> states(const Eigen::VectorXd& z) const;
  double slack(const Eigen::VectorXd& z) const;
};

CondensedQp condense(const TrackingProblem& problem,
                     const AffineDynamics& dynamics);

/// Objective of the tracking problem for given trajectories, without slack.
double tracking_cost(const TrackingProblem& problem,
                     const std::vector<Eigen::VectorXd>& states,
                     const std::vector<Eigen::VectorXd>& inputs);

/// Amount by which the terminal box is exceeded (0 when satisfied).
double terminal_violation(const TrackingProblem& problem,
                          const Eigen::VectorXd& terminal_state);

/// Largest violation of the state bounds over steps 1..N.
double state_violation(const TrackingProblem& problem,
                       const std::vector<Eigen::VectorXd>& states);

}  // namespace tubempc
