#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tubempc/condensed.hpp"
#include "tubempc/qp.hpp"

namespace tubempc {

/// Tracking problem whose dynamics are a nonlinear discrete map.
/// The affine data in `base` (weights, bounds, terminal) is reused; the
/// dynamics are re-linearized along each iterate.
struct NonlinearTrackingProblem {
  TrackingProblem base;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      step;
  /// Discrete Jacobians (A, B) of `step` at (x, u).
  std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&,
                     Eigen::MatrixXd&, Eigen::MatrixXd&)>
      jacobian;
};

struct SqpSettings {
  int max_iterations = 50;
  double step_tolerance = 1e-6;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 30;
  double feasibility_tolerance = 1e-6;
  QpSettings qp;
};

enum class SqpStatus { kConverged, kMaxIterations, kInfeasible };
std::string to_string(SqpStatus status);

struct SqpResult {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> states;
  double cost = 0.0;   ///< tracking cost of the returned iterate
  double slack = 0.0;  ///< terminal violation of the returned iterate
  double merit = 0.0;
  SqpStatus status = SqpStatus::kInfeasible;
  bool feasible = false;
  int iterations = 0;     ///< accepted steps
  int qp_iterations = 0;  ///< summed over all QP solves
  /// Merit of the initial guess followed by every accepted iterate.
  std::vector<double> merit_history;
  double solve_time = 0.0;  ///< wall-clock seconds
};

/// Nominal rollout of `inputs` from the problem's initial state.
std::vector<Eigen::VectorXd> rollout(const NonlinearTrackingProblem& problem,
                                     const std::vector<Eigen::VectorXd>& inputs);

/// Line-search SQP: linearize along the current trajectory, solve the
/// condensed QP for a new input sequence, backtrack on the merit
/// cost + slack_weight * (terminal + state violation). Stops when the step
/// is below step_tolerance or after max_iterations, returning the best
/// feasible iterate.
SqpResult solve_nlp_sqp(const NonlinearTrackingProblem& problem,
                        const std::vector<Eigen::VectorXd>& initial_inputs,
                        const SqpSettings& settings = {});

}  // namespace tubempc
