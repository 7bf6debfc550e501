#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tubempc/controllers.hpp"
#include "tubempc/plant.hpp"

namespace tubempc {

enum class TaskKind { kPositionReach, kTrajectoryTrack };

/// Quarter circle from angle pi to pi/2 about arc_center, then a straight
/// segment from the arc end to line_end, travelled at constant speed.
struct PathSpec {
  Eigen::Vector2d arc_center{2.0, 4.0};
  double radius = 2.0;
  Eigen::Vector2d line_end{4.0, 5.0};
  double speed = 0.1;  ///< length units per second
};

struct Task {
  TaskKind kind = TaskKind::kPositionReach;
  ArmState initial = ArmState::Zero();
  Eigen::Vector2d target{2.0, 6.0};
  PathSpec path;
  int duration = 300;  ///< steps

  /// "position" or "trajectory".
  std::string name() const;
};

/// Arm angles (pi - atan(1/2), pi - atan 2, atan(1/3)) with the end effector
/// at (0, 4).
ArmState default_initial_state(const ArmParams& params);
/// Reach (2, 6) from (0, 4) in 300 steps.
Task position_task(const ArmParams& params);
/// Follow the arc and line in 600 steps.
Task trajectory_task(const ArmParams& params);
/// Throws std::invalid_argument for an unknown name.
Task make_task(const std::string& name, const ArmParams& params);
const std::vector<std::string>& task_names();

/// Throws std::invalid_argument when the initial state leaves the state box
/// or its position disagrees with the forward kinematics by more than 1e-9.
void validate_task(const Task& task, const ArmParams& params);

/// Reference position at a step; steps past the end of the path hold the
/// final point.
Eigen::Vector2d reference_path(const Task& task, int step, double dt);
ReferenceFn task_reference(const Task& task, double dt);

struct TraceRecord {
  int step = 0;
  double time = 0.0;
  ArmState state = ArmState::Zero();  ///< measured at the start of the step
  ArmInput input = ArmInput::Zero();  ///< applied during the step
  Eigen::Vector2d reference = Eigen::Vector2d::Zero();
  ArmState nominal = ArmState::Zero();
  double disturbance_norm = 0.0;
  int plan_basis_step = 0;
  int plan_ready_step = -1;
  bool saturated = false;
  /// Controller events raised while producing this input, ';' separated.
  std::string events;
};

struct SimTrace {
  std::string controller;
  std::string task;
  std::uint64_t seed = 0;
  double dt = 0.1;
  double eta1 = 0.0;
  std::vector<TraceRecord> records;
  ArmState final_state = ArmState::Zero();
  Eigen::Vector2d final_reference = Eigen::Vector2d::Zero();
  std::vector<SolveRecord> solves;
  std::vector<HandoffRecord> handoffs;
  std::vector<ControllerEvent> events;
  Box state_box;
  Box input_box;

  /// Measured state at a step, final_state at records.size().
  const ArmState& state_at(int step) const;
};

struct SimConfig {
  bool apply_disturbance = true;
  /// Overrides the task duration when positive.
  int duration = 0;
};

/// Resets the controller at the task's initial state and advances plant and
/// controller for the task duration. Throws NumericalError when the plant
/// state stops being finite.
SimTrace run_closed_loop(Controller& controller, const Task& task,
                         const ArmParams& params, std::uint64_t seed,
                         const SimConfig& config = {});

struct SummaryStats {
  double mean = 0.0;
  double max = 0.0;
  double total = 0.0;
};

struct Metrics {
  std::string task;
  std::string controller;
  std::uint64_t seed = 0;
  int steps = 0;
  double dt = 0.0;
  double final_position_error = 0.0;
  double rms_tracking_error = 0.0;
  double cumulative_cost = 0.0;
  double max_constraint_violation = 0.0;
  double max_input_violation = 0.0;
  /// Modeled computation time per solve.
  SummaryStats solve_time;
  SummaryStats qp_iterations;
  int solve_count = 0;
  int handoff_count = 0;
  /// Fraction of handoffs whose predicted ball held the realized state; 1
  /// when there are none.
  double tube_containment_rate = 1.0;
  double eta1 = 0.0;
  double max_eta = 0.0;
  double max_eta2 = 0.0;
  double max_tube_radius = 0.0;
  int fallback_count = 0;
  int infeasible_count = 0;
  int saturation_count = 0;
  int feedback_disabled_count = 0;
  int gain_reuse_count = 0;
  int terminal_fallback_count = 0;
};

Metrics compute_metrics(const SimTrace& trace, const CostWeights& weights);

inline constexpr int kMetricsSchemaVersion = 1;
/// Fixed-key JSON, deterministic for identical inputs.
std::string metrics_to_json(const Metrics& metrics);
/// Measured wall-clock solve times; machine dependent.
std::string timing_to_json(const SimTrace& trace);

/// Column names of the trace CSV, 17 entries.
const std::vector<std::string>& trace_columns();
void write_trace_csv(std::ostream& out, const SimTrace& trace);

}  // namespace tubempc
