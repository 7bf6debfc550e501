#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tubempc/condensed.hpp"
#include "tubempc/gains.hpp"
#include "tubempc/linearize.hpp"
#include "tubempc/plant.hpp"
#include "tubempc/sqp.hpp"
#include "tubempc/tube.hpp"

namespace tubempc {

enum class HorizonInterpretation { kSeconds, kSteps };

struct HorizonConfig {
  double delta = 0.1;      ///< sampling interval, seconds
  double horizon_T = 3.0;  ///< prediction horizon as given in the config
  int N = 30;
  int m_smooth = 3;
  int m_triggered = 28;

  /// N = round(T / delta) for kSeconds and round(T) for kSteps; delays are
  /// rounded up to whole steps.
  static HorizonConfig Make(double delta, double horizon_T,
                            double smooth_delay_s, double triggered_delay_s,
                            HorizonInterpretation interpretation);
  /// delta 0.1 s, T = 3 s, delays 0.3 s and 2.8 s.
  static HorizonConfig Default();
  /// Requires delta > 0, N >= 1, 1 <= m_smooth <= N, 0 <= m_triggered <= N.
  void validate() const;
};

/// Reference end-effector position at a simulation step.
using ReferenceFn = std::function<Eigen::Vector2d(int)>;

/// Per-step reference states for steps start..start+N; angle entries are 0
/// and carry no weight.
std::vector<ArmState> reference_window(const ReferenceFn& reference, int start,
                                       int N);

/// diag(1, 1, 0, 0, 0): only the end-effector position is tracked.
Eigen::MatrixXd tracking_selector();
ArmState tracking_error(const ArmState& x, const ArmState& reference);

/// |x_err|_Q^2 + |u|_R^2.
double stage_cost(const Eigen::VectorXd& x_err, const Eigen::VectorXd& u,
                  const CostWeights& weights);

enum class OcpStatus { kOptimal, kMaxIterations, kInfeasible };
std::string to_string(OcpStatus status);

struct OcpSolution {
  std::vector<ArmInput> inputs;  ///< N entries
  std::vector<ArmState> states;  ///< N + 1 entries
  double cost = 0.0;             ///< tracking cost, slack penalty excluded
  double slack = 0.0;
  OcpStatus status = OcpStatus::kInfeasible;
  double solve_time = 0.0;  ///< wall-clock seconds
  int iterations = 0;       ///< QP iterations (summed over SQP steps)
  int major_iterations = 0; ///< accepted SQP steps, 1 for a single QP
  bool usable() const { return status != OcpStatus::kInfeasible; }
};

/// Sum of stage costs on tracking errors plus the terminal term |e_N|_P^2.
double horizon_cost(const OcpSolution& solution, const CostWeights& weights,
                    const Eigen::MatrixXd& P,
                    const std::vector<ArmState>& reference);

struct TerminalSpec {
  Eigen::MatrixXd P;  ///< terminal weight
  double epsilon = 0.0;
  bool enabled = true;
  bool soft = true;
};

/// Linear problem on the handoff interval's model.
struct Ocp2 {
  TrackingProblem problem;
  AffineDynamics dynamics;
  CondensedQp condensed;
};

/// Nominal initial state fixed at the ball center, dynamics from the
/// linearization, per-step tightened state boxes and input box from the tube,
/// terminal ball on the position error. Throws InfeasibleError when the tube
/// has an empty box.
Ocp2 build_ocp2(const LinearizedModel& model, const TubeProfile& tube,
                const DisturbedStateSet& initial, const TerminalSpec& terminal,
                const CostWeights& weights, const HorizonConfig& horizon,
                const std::vector<ArmState>& reference);

OcpSolution solve_ocp2(const Ocp2& ocp, const QpSolver& solver,
                       const WarmStart* warm = nullptr);

struct TighteningSpec {
  double eta = 0.0;
  double l = 0.0;
};

/// Nonlinear problem on the Euler model.
struct Ocp1 {
  NonlinearTrackingProblem problem;
};

/// State boxes tightened by i * eta * (1 + l)^i, the full input box and the
/// terminal ball. Throws InfeasibleError when x0 leaves the state box or a
/// tightened box is empty.
Ocp1 build_ocp1(const ArmParams& params, const ArmState& x0,
                const CostWeights& weights, const TerminalSpec& terminal,
                const HorizonConfig& horizon,
                const std::vector<ArmState>& reference,
                const TighteningSpec& tightening);

OcpSolution solve_ocp1(const Ocp1& ocp, const std::vector<ArmInput>& guess,
                       const SqpSettings& settings = {});

}  // namespace tubempc
