#include "tubempc/sim.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tubempc {

using std::numbers::pi;

std::string Task::name() const {
  return kind == TaskKind::kPositionReach ? "position" : "trajectory";
}

ArmState default_initial_state(const ArmParams& params) {
  const Eigen::Vector3d theta(pi - std::atan(0.5), pi - std::atan(2.0),
                              std::atan(1.0 / 3.0));
  return state_from_angles(theta, params);
}

Task position_task(const ArmParams& params) {
  Task t;
  t.kind = TaskKind::kPositionReach;
  t.initial = default_initial_state(params);
  t.duration = 300;
  return t;
}

Task trajectory_task(const ArmParams& params) {
  Task t;
  t.kind = TaskKind::kTrajectoryTrack;
  t.initial = default_initial_state(params);
  t.target = t.path.line_end;
  t.duration = 600;
  return t;
}

const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names{"position", "trajectory"};
  return names;
}

Task make_task(const std::string& name, const ArmParams& params) {
  if (name == "position") return position_task(params);
  if (name == "trajectory") return trajectory_task(params);
  throw std::invalid_argument("unknown task '" + name + "'");
}

void validate_task(const Task& task, const ArmParams& params) {
  if (task.duration < 1) throw std::invalid_argument("task: duration < 1");
  if (!params.state_box.contains(task.initial)) {
    throw std::invalid_argument("task: initial state outside the state box");
  }
  const Eigen::Vector2d fk =
      forward_kinematics(task.initial.tail<3>(), params);
  if ((fk - position_of(task.initial)).norm() > 1e-9) {
    throw std::invalid_argument(
        "task: initial position disagrees with the arm angles");
  }
  if (task.kind == TaskKind::kTrajectoryTrack &&
      !(task.path.radius > 0.0 && task.path.speed > 0.0)) {
    throw std::invalid_argument("task: path radius and speed must be > 0");
  }
}

Eigen::Vector2d reference_path(const Task& task, int step, double dt) {
  if (task.kind == TaskKind::kPositionReach) return task.target;
  const PathSpec& p = task.path;
  const double s = p.speed * dt * std::max(step, 0);
  const double arc = 0.5 * pi * p.radius;
  if (s <= arc) {
    const double phi = pi - s / p.radius;
    return p.arc_center + p.radius * Eigen::Vector2d(std::cos(phi), std::sin(phi));
  }
  const Eigen::Vector2d start = p.arc_center + Eigen::Vector2d(0.0, p.radius);
  const Eigen::Vector2d d = p.line_end - start;
  const double len = d.norm();
  if (len == 0.0 || s - arc >= len) return p.line_end;
  return start + (s - arc) / len * d;
}

ReferenceFn task_reference(const Task& task, double dt) {
  return [task, dt](int step) { return reference_path(task, step, dt); };
}

const ArmState& SimTrace::state_at(int step) const {
  if (step < 0 || step > static_cast<int>(records.size())) {
    throw std::out_of_range("SimTrace::state_at: step outside the trace");
  }
  return step == static_cast<int>(records.size()) ? final_state
                                                  : records[step].state;
}

SimTrace run_closed_loop(Controller& controller, const Task& task,
                         const ArmParams& params, std::uint64_t seed,
                         const SimConfig& config) {
  validate_task(task, params);
  const double dt = controller.settings().horizon.delta;
  const int steps = config.duration > 0 ? config.duration : task.duration;

  SimTrace trace;
  trace.controller = controller.name();
  trace.task = task.name();
  trace.seed = seed;
  trace.dt = dt;
  trace.eta1 = params.eta1;
  trace.state_box = params.state_box;
  trace.input_box = params.input_box;
  trace.records.reserve(steps);

  controller.reset(task.initial);
  DisturbanceSampler sampler(seed, params.eta1);
  ArmState x = task.initial;
  for (int t = 0; t < steps; ++t) {
    const std::size_t before = controller.events().size();
    const ControlOutput out = controller.control(t, x);
    TraceRecord r;
    r.step = t;
    r.time = t * dt;
    r.state = x;
    r.input = out.input;
    r.reference = reference_path(task, t, dt);
    r.nominal = out.nominal;
    r.plan_basis_step = out.plan_basis_step;
    r.plan_ready_step = out.plan_ready_step;
    r.saturated = out.saturated;
    const auto& ev = controller.events();
    for (std::size_t i = before; i < ev.size(); ++i) {
      if (!r.events.empty()) r.events += ';';
      r.events += to_string(ev[i].kind);
    }
    const ArmState d =
        config.apply_disturbance ? sampler.next() : ArmState::Zero();
    r.disturbance_norm = d.norm();
    x = step_real(x, out.input, params, dt, d, false);
    if (!x.allFinite()) {
      std::ostringstream os;
      os << "run_closed_loop: plant state is not finite after step " << t;
      throw NumericalError(os.str());
    }
    trace.records.push_back(std::move(r));
  }
  trace.final_state = x;
  trace.final_reference = reference_path(task, steps, dt);
  trace.solves = controller.solves();
  trace.handoffs = controller.handoffs();
  trace.events = controller.events();
  return trace;
}

namespace {

void accumulate(SummaryStats& s, double v, int count) {
  s.total += v;
  s.max = std::max(s.max, v);
  s.mean = s.total / count;
}

}  // namespace

Metrics compute_metrics(const SimTrace& trace, const CostWeights& weights) {
  Metrics m;
  m.task = trace.task;
  m.controller = trace.controller;
  m.seed = trace.seed;
  m.steps = static_cast<int>(trace.records.size());
  m.dt = trace.dt;
  m.eta1 = trace.eta1;

  double sq = 0.0;
  for (const auto& r : trace.records) {
    const Eigen::Vector2d e = position_of(r.state) - r.reference;
    sq += e.squaredNorm();
    ArmState ref = ArmState::Zero();
    ref.head<2>() = r.reference;
    m.cumulative_cost += stage_cost(tracking_error(r.state, ref), r.input, weights);
    if (trace.state_box.size() == kStateDim) {
      m.max_constraint_violation =
          std::max(m.max_constraint_violation, trace.state_box.violation(r.state));
    }
    if (trace.input_box.size() == kInputDim) {
      m.max_input_violation =
          std::max(m.max_input_violation, trace.input_box.violation(r.input));
    }
  }
  m.max_constraint_violation =
      std::max(m.max_constraint_violation, m.max_input_violation);
  if (trace.state_box.size() == kStateDim) {
    m.max_constraint_violation = std::max(
        m.max_constraint_violation, trace.state_box.violation(trace.final_state));
  }
  if (m.steps > 0) m.rms_tracking_error = std::sqrt(sq / m.steps);
  m.final_position_error =
      (position_of(trace.final_state) - trace.final_reference).norm();

  int k = 0;
  for (const auto& s : trace.solves) {
    ++k;
    accumulate(m.solve_time, s.virtual_time, k);
    accumulate(m.qp_iterations, s.iterations, k);
  }
  m.solve_count = k;

  int inside = 0, counted = 0;
  for (const auto& h : trace.handoffs) {
    m.max_eta = std::max(m.max_eta, h.eta);
    m.max_eta2 = std::max(m.max_eta2, h.eta2);
    m.max_tube_radius = std::max(m.max_tube_radius, h.radius);
    if (h.target_step > m.steps) continue;
    ++counted;
    if ((trace.state_at(h.target_step) - h.center).norm() <= h.radius) ++inside;
  }
  m.handoff_count = counted;
  m.tube_containment_rate =
      counted > 0 ? static_cast<double>(inside) / counted : 1.0;

  for (const auto& e : trace.events) {
    switch (e.kind) {
      case EventKind::kFallback:
        ++m.fallback_count;
        break;
      case EventKind::kInfeasible:
        ++m.infeasible_count;
        break;
      case EventKind::kSaturation:
        ++m.saturation_count;
        break;
      case EventKind::kFeedbackDisabled:
        ++m.feedback_disabled_count;
        break;
      case EventKind::kGainReuse:
        ++m.gain_reuse_count;
        break;
      case EventKind::kTerminalFallback:
        ++m.terminal_fallback_count;
        break;
      default:
        break;
    }
  }
  return m;
}

namespace {

nlohmann::ordered_json stats_json(const SummaryStats& s) {
  nlohmann::ordered_json j;
  j["mean"] = s.mean;
  j["max"] = s.max;
  j["total"] = s.total;
  return j;
}

}  // namespace

std::string metrics_to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["task"] = m.task;
  j["controller"] = m.controller;
  j["seed"] = m.seed;
  j["steps"] = m.steps;
  j["dt"] = m.dt;
  j["final_position_error"] = m.final_position_error;
  j["rms_tracking_error"] = m.rms_tracking_error;
  j["cumulative_cost"] = m.cumulative_cost;
  j["max_constraint_violation"] = m.max_constraint_violation;
  j["max_input_violation"] = m.max_input_violation;
  j["solve_time_stats"] = stats_json(m.solve_time);
  j["qp_iteration_stats"] = stats_json(m.qp_iterations);
  j["solve_count"] = m.solve_count;
  j["handoff_count"] = m.handoff_count;
  j["tube_containment_rate"] = m.tube_containment_rate;
  j["eta"] = {{"eta1", m.eta1}, {"max_eta", m.max_eta}, {"max_eta2", m.max_eta2},
              {"max_tube_radius", m.max_tube_radius}};
  j["events"] = {{"fallback", m.fallback_count},
                 {"infeasible", m.infeasible_count},
                 {"saturation", m.saturation_count},
                 {"feedback_disabled", m.feedback_disabled_count},
                 {"gain_reuse", m.gain_reuse_count},
                 {"terminal_fallback", m.terminal_fallback_count}};
  return j.dump(2) + "\n";
}

std::string timing_to_json(const SimTrace& trace) {
  nlohmann::ordered_json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["task"] = trace.task;
  j["controller"] = trace.controller;
  j["seed"] = trace.seed;
  SummaryStats wall;
  nlohmann::ordered_json solves = nlohmann::ordered_json::array();
  int k = 0;
  for (const auto& s : trace.solves) {
    accumulate(wall, s.wall_time, ++k);
    solves.push_back({{"step", s.step},
                      {"problem", s.problem},
                      {"status", to_string(s.status)},
                      {"iterations", s.iterations},
                      {"major_iterations", s.major_iterations},
                      {"wall_time", s.wall_time}});
  }
  j["wall_solve_time"] = stats_json(wall);
  j["solves"] = std::move(solves);
  return j.dump(2) + "\n";
}

const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols{
      "step",     "time",     "x",         "y",         "theta1",
      "theta2",   "theta3",   "omega1",    "omega2",    "omega3",
      "x_ref",    "y_ref",    "nominal_x", "nominal_y", "disturbance_norm",
      "plan_ready_step", "events"};
  return cols;
}

void write_trace_csv(std::ostream& out, const SimTrace& trace) {
  const auto& cols = trace_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out << (i ? "," : "") << cols[i];
  }
  out << '\n';
  std::ostringstream row;
  row << std::setprecision(17);
  for (const auto& r : trace.records) {
    row.str("");
    row << r.step << ',' << r.time;
    for (int i = 0; i < kStateDim; ++i) row << ',' << r.state[i];
    for (int i = 0; i < kInputDim; ++i) row << ',' << r.input[i];
    row << ',' << r.reference.x() << ',' << r.reference.y() << ','
        << r.nominal[kX] << ',' << r.nominal[kY] << ',' << r.disturbance_norm
        << ',' << r.plan_ready_step << ',' << r.events << '\n';
    out << row.str();
  }
}

}  // namespace tubempc
