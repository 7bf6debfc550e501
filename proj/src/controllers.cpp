#include "tubempc/controllers.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>
#include <stdexcept>

namespace tubempc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

bool PlanBuffer::covers(int from, int steps) const {
  return valid && from >= anchor_time &&
         from + steps <= anchor_time + static_cast<int>(inputs.size());
}

ArmInput PlanBuffer::input_at(int step) const {
  const int j = step - anchor_time;
  if (!valid || j < 0 || j >= static_cast<int>(inputs.size())) {
    return ArmInput::Zero();
  }
  return inputs[j];
}

PlanBuffer PlanBuffer::shifted(int steps) const {
  if (steps < 0) throw std::invalid_argument("PlanBuffer::shifted: steps < 0");
  PlanBuffer out = *this;
  const std::size_t n = inputs.size();
  const std::size_t k = std::min<std::size_t>(steps, n);
  out.inputs.assign(inputs.begin() + k, inputs.end());
  out.inputs.resize(n, ArmInput::Zero());
  if (!nominal_states.empty()) {
    const std::size_t ks = std::min(k, nominal_states.size() - 1);
    out.nominal_states.assign(nominal_states.begin() + ks, nominal_states.end());
    out.nominal_states.resize(nominal_states.size(), out.nominal_states.back());
  }
  out.anchor_time = anchor_time + steps;
  return out;
}

FeedbackInput tube_feedback_input(const ArmInput& v, const GainMatrix& K,
                                  const ArmState& x, const ArmState& x_star,
                                  const Box& input_box) {
  const ArmInput raw = v + K * (x - x_star);
  FeedbackInput out;
  out.input = input_box.project(raw);
  out.saturated = (out.input - raw).cwiseAbs().maxCoeff() > 0.0;
  return out;
}

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kSolve:
      return "solve";
    case EventKind::kHandoff:
      return "handoff";
    case EventKind::kSaturation:
      return "saturation";
    case EventKind::kFallback:
      return "fallback";
    case EventKind::kGainReuse:
      return "gain_reuse";
    case EventKind::kFeedbackDisabled:
      return "feedback_disabled";
    case EventKind::kInfeasible:
      return "infeasible";
    case EventKind::kTerminalFallback:
      return "terminal_fallback";
  }
  return "unknown";
}

namespace {

Box shifted_box(const Box& box, const VectorXd& by) {
  Box out = box;
  out.lower -= by;
  out.upper -= by;
  return out;
}

std::vector<ArmInput> shift_guess(const std::vector<ArmInput>& inputs,
                                  int steps, int N) {
  std::vector<ArmInput> out;
  for (int i = 0; i < N; ++i) {
    const int j = i + steps;
    if (j < static_cast<int>(inputs.size())) {
      out.push_back(inputs[j]);
    } else {
      out.push_back(inputs.empty() ? ArmInput::Zero() : inputs.back());
    }
  }
  return out;
}

/// Nominal rollout of a constant input for m steps; m + 1 states.
std::vector<ArmState> constant_rollout(const ArmState& x, const ArmInput& v,
                                       const ArmParams& p, double dt, int m) {
  std::vector<ArmState> xs{x};
  for (int j = 0; j < m; ++j) xs.push_back(step_nominal(xs.back(), v, p, dt));
  return xs;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

SolveRecord make_record(int step, const char* problem, const OcpSolution& sol,
                        double wall, double virtual_time) {
  SolveRecord r;
  r.step = step;
  r.problem = problem;
  r.status = sol.status;
  r.iterations = sol.iterations;
  r.major_iterations = sol.major_iterations;
  r.wall_time = wall;
  r.virtual_time = virtual_time;
  return r;
}

}  // namespace

GainSynthesis synthesize_gains(const ControllerSettings& settings,
                               const ArmState& x, const ArmInput& u) {
  const ArmParams& p = settings.params;
  GainSynthesis out;
  out.model = linearize(x, u, p, settings.horizon.delta);
  try {
    out.gains = solve_dare(out.model.A, out.model.B, settings.weights.Q,
                           settings.weights.R);
    out.stabilizable = true;
  } catch (const NumericalError&) {
    out.gains = GainSet{};
    out.gains.P = settings.weights.Q;
    out.gains.K = MatrixXd::Zero(kInputDim, kStateDim);
    out.gains.epsilon = settings.terminal_options.max_radius;
    out.gains.closed_loop_spectral_radius =
        max_eigenvalue_modulus(MatrixXd(out.model.A));
    return out;
  }
  try {
    out.gains.epsilon = terminal_radius(
        out.gains, out.model.A, out.model.B, shifted_box(p.input_box, u),
        shifted_box(p.state_box, x), settings.terminal_options);
    out.terminal_set = true;
  } catch (const NumericalError&) {
    out.terminal_set = false;
  }
  return out;
}

Controller::Controller(ControllerSettings settings)
    : settings_(std::move(settings)) {
  settings_.params.validate();
  settings_.weights.validate();
  settings_.horizon.validate();
  if (!settings_.reference) {
    throw std::invalid_argument("Controller: reference function not set");
  }
  if (settings_.tightening_l < 0.0) {
    throw std::invalid_argument("Controller: tightening l must be >= 0");
  }
}

void Controller::log(int step, EventKind kind, std::string detail) {
  events_.push_back(ControllerEvent{step, kind, std::move(detail)});
}

void Controller::clear_logs() {
  events_.clear();
  solves_.clear();
  handoffs_.clear();
}

OcpSolution Controller::bootstrap(const ArmState& x0,
                                  const TighteningSpec& tightening,
                                  bool certify) {
  const auto& s = settings_;
  const int N = s.horizon.N;
  const auto ref = reference_window(s.reference, 0, N);

  TerminalSpec first;
  first.P = s.weights.Q;
  first.enabled = false;
  first.soft = s.soft_terminal;
  const Ocp1 pass1 =
      build_ocp1(s.params, x0, s.weights, first, s.horizon, ref, tightening);
  OcpSolution sol = solve_ocp1(
      pass1, std::vector<ArmInput>(N, ArmInput::Zero()), s.sqp);
  terminal_ = first;
  const ArmInput v0 = sol.inputs.empty() ? ArmInput::Zero() : sol.inputs[0];
  offline_ = synthesize_gains(s, x0, v0);
  if (!s.terminal_enabled) return sol;

  terminal_.P = offline_.gains.P;
  terminal_.epsilon = offline_.gains.epsilon;
  terminal_.enabled = true;
  if (!offline_.stabilizable) {
    log(0, EventKind::kTerminalFallback, "anchor pair not stabilizable");
  } else if (!offline_.terminal_set) {
    terminal_.enabled = false;
    log(0, EventKind::kTerminalFallback, "terminal radius collapsed");
  }

  TighteningSpec second = tightening;
  if (certify) {
    const int m = s.horizon.m_smooth;
    const auto xs = constant_rollout(x0, v0, s.params, s.horizon.delta, m);
    const IntervalCertificate cert = certify_interval(
        s.params, s.horizon.delta,
        std::vector<ArmState>(xs.begin(), xs.end() - 1),
        std::vector<ArmInput>(m, v0), GainMatrix(offline_.gains.K));
    if (cert.certified) second.eta = cert.eta;
  }
  const Ocp1 pass2 =
      build_ocp1(s.params, x0, s.weights, terminal_, s.horizon, ref, second);
  OcpSolution refined = solve_ocp1(pass2, sol.inputs, s.sqp);
  if (refined.usable()) return refined;
  return sol;
}

// ---------------------------------------------------------------- ideal

IdealController::IdealController(ControllerSettings settings)
    : Controller(std::move(settings)) {}

void IdealController::reset(const ArmState& x0) {
  clear_logs();
  const OcpSolution sol =
      bootstrap(x0, {settings_.params.eta1, settings_.tightening_l});
  guess_ = sol.inputs;
  last_input_ = ArmInput::Zero();
}

ControlOutput IdealController::control(int step, const ArmState& measured) {
  const auto& s = settings_;
  const int N = s.horizon.N;
  ControlOutput out;
  out.plan_basis_step = step;
  out.plan_ready_step = step;
  out.nominal = measured;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Ocp1 ocp = build_ocp1(s.params, measured, s.weights, terminal_,
                                s.horizon, reference_window(s.reference, step, N),
                                {s.params.eta1, s.tightening_l});
    const OcpSolution sol = solve_ocp1(ocp, guess_, s.sqp);
    solves_.push_back(make_record(step, "ocp1", sol, seconds_since(t0), 0.0));
    log(step, EventKind::kSolve, to_string(sol.status));
    if (sol.usable()) {
      last_input_ = sol.inputs[0];
      guess_ = shift_guess(sol.inputs, 1, N);
    } else {
      log(step, EventKind::kInfeasible, "holding previous input");
    }
  } catch (const InfeasibleError& e) {
    log(step, EventKind::kInfeasible, e.what());
  }
  out.input = last_input_;
  return out;
}

// ---------------------------------------------------------------- triggered

TriggeredController::TriggeredController(ControllerSettings settings)
    : Controller(std::move(settings)) {
  delay_.compute_steps = settings_.horizon.m_triggered;
  delay_.policy = settings_.hold_policy;
  if (delay_.compute_steps == 0) {
    zero_delay_ = std::make_unique<IdealController>(settings_);
  }
}

void TriggeredController::reset(const ArmState& x0) {
  clear_logs();
  if (zero_delay_) {
    zero_delay_->reset(x0);
    terminal_ = zero_delay_->terminal();
    offline_ = zero_delay_->offline_synthesis();
    events_ = zero_delay_->events();
    return;
  }
  const OcpSolution sol =
      bootstrap(x0, {settings_.params.eta1, settings_.tightening_l});
  current_ = PlanBuffer{};
  current_.inputs = sol.inputs;
  current_.nominal_states = sol.states;
  current_.anchor_time = 0;
  current_.basis_step = 0;
  current_.ready_step = -1;
  current_.valid = true;
  pending_ = PlanBuffer{};
  guess_ = sol.inputs;
}

ControlOutput TriggeredController::control(int step, const ArmState& measured) {
  if (zero_delay_) {
    ControlOutput out = zero_delay_->control(step, measured);
    events_ = zero_delay_->events();
    solves_ = zero_delay_->solves();
    return out;
  }
  const auto& s = settings_;
  const int N = s.horizon.N;
  const int M = delay_.compute_steps;
  if (step % M == 0) {
    if (step > 0) {
      if (pending_.valid) {
        current_ = pending_;
        log(step, EventKind::kHandoff, "plan activated");
      } else {
        log(step, EventKind::kFallback, "keeping previous plan");
      }
      pending_ = PlanBuffer{};
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Ocp1 ocp = build_ocp1(
          s.params, measured, s.weights, terminal_, s.horizon,
          reference_window(s.reference, step, N), {s.params.eta1, s.tightening_l});
      const OcpSolution sol = solve_ocp1(ocp, guess_, s.sqp);
      solves_.push_back(make_record(step, "ocp1", sol, seconds_since(t0),
                                    M * s.horizon.delta));
      log(step, EventKind::kSolve, to_string(sol.status));
      if (sol.usable()) {
        pending_.inputs = sol.inputs;
        pending_.nominal_states = sol.states;
        pending_.basis_step = step;
        pending_.ready_step = step + M - 1;
        // Hold-and-block replays the plan from its start once it arrives;
        // apply-when-ready keeps it aligned with the time it was computed for.
        pending_.anchor_time =
            delay_.policy == HoldPolicy::kBlockAndHold ? step + M : step;
        pending_.valid = true;
        guess_ = shift_guess(sol.inputs, M, N);
      } else {
        log(step, EventKind::kInfeasible, "no plan from this measurement");
      }
    } catch (const InfeasibleError& e) {
      log(step, EventKind::kInfeasible, e.what());
    }
  }

  ControlOutput out;
  out.plan_basis_step = current_.basis_step;
  out.plan_ready_step = current_.ready_step;
  const int n = static_cast<int>(current_.inputs.size());
  const int j = std::clamp(step - current_.anchor_time, 0, std::max(n - 1, 0));
  out.input = n > 0 ? current_.inputs[j] : ArmInput::Zero();
  out.nominal = j < static_cast<int>(current_.nominal_states.size())
                    ? current_.nominal_states[j]
                    : measured;
  return out;
}

// ---------------------------------------------------------------- smooth

namespace {

struct PlanJob {
  ControllerSettings settings;
  TerminalSpec terminal;
  int step = 0;
  ArmState center = ArmState::Zero();
  double radius = 0.0;
  ArmInput anchor_input = ArmInput::Zero();
  GainMatrix K = GainMatrix::Zero();
  std::vector<ArmInput> warm_inputs;
};

SmoothController::NextPlan plan_next(const PlanJob& job) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& s = job.settings;
  const ArmParams& p = s.params;
  const double dt = s.horizon.delta;
  const int N = s.horizon.N;
  const int m = s.horizon.m_smooth;
  const int target = job.step + m;

  SmoothController::NextPlan next;
  next.solve.step = job.step;
  next.solve.problem = "ocp2";
  next.solve.virtual_time = m * dt;
  auto event = [&](EventKind kind, std::string detail) {
    next.events.push_back(ControllerEvent{job.step, kind, std::move(detail)});
  };

  const LinearizedModel model = linearize(job.center, job.anchor_input, p, dt);
  GainMatrix K = job.K;
  try {
    K = solve_dare(model.A, model.B, s.weights.Q, s.weights.R).K;
  } catch (const NumericalError& e) {
    event(EventKind::kGainReuse, e.what());
  }

  const auto xs = constant_rollout(job.center, job.anchor_input, p, dt, m);
  const std::vector<ArmState> states(xs.begin(), xs.end() - 1);
  const std::vector<ArmInput> inputs(m, job.anchor_input);
  IntervalCertificate cert = certify_interval(p, dt, states, inputs, K);
  if (!cert.certified && !K.isZero()) {
    K.setZero();
    cert = certify_interval(p, dt, states, inputs, K);
    event(EventKind::kFeedbackDisabled, "a-priori bound not certified");
  }
  next.K = K;
  double eta = cert.eta, lambda_bar = cert.lambda_bar;
  if (!cert.certified) {
    eta = p.eta1;
    lambda_bar = std::max(1.0, max_eigenvalue_modulus(MatrixXd(model.A)));
  }

  const TubeProfile tube =
      build_tube_profile(p.state_box, p.input_box, K, lambda_bar, eta, N, m,
                         s.tightening_l);
  if (!tube.feasible) {
    std::ostringstream os;
    os << "tightened set empty at horizon step " << tube.infeasible_step;
    event(EventKind::kInfeasible, os.str());
    next.solve.wall_time = seconds_since(t0);
    return next;
  }
  const Ocp2 ocp = build_ocp2(
      model, tube, predictive_state_set(job.center, job.radius), job.terminal,
      s.weights, s.horizon, reference_window(s.reference, target, N));
  WarmStart warm;
  warm.primal = VectorXd::Zero(ocp.condensed.qp.num_variables());
  for (int i = 0; i < N; ++i) {
    warm.primal.segment(i * kInputDim, kInputDim) =
        tube.input_box.project(job.warm_inputs[i]);
  }
  const QpSolver solver(s.qp);
  const OcpSolution sol = solve_ocp2(ocp, solver, &warm);
  next.solve.status = sol.status;
  next.solve.iterations = sol.iterations;
  next.solve.major_iterations = sol.major_iterations;
  event(EventKind::kSolve, to_string(sol.status));
  if (sol.status == OcpStatus::kOptimal) {
    next.ok = true;
    next.plan.inputs = sol.inputs;
    next.plan.nominal_states = sol.states;
    next.plan.anchor_time = target;
    next.plan.basis_step = job.step;
    next.plan.ready_step = target - 1;
    next.plan.valid = true;
  }
  next.solve.wall_time = seconds_since(t0);
  return next;
}

}  // namespace

SmoothController::SmoothController(ControllerSettings settings)
    : Controller(std::move(settings)) {}

SmoothController::~SmoothController() {
  if (running_.valid()) running_.wait();
}

void SmoothController::reset(const ArmState& x0) {
  if (running_.valid()) running_.wait();
  running_ = {};
  ready_.reset();
  clear_logs();
  const OcpSolution sol =
      bootstrap(x0, {settings_.params.eta1, settings_.tightening_l}, true);
  if (!sol.usable()) log(0, EventKind::kInfeasible, "initial plan infeasible");
  plan_ = PlanBuffer{};
  plan_.inputs = sol.inputs;
  plan_.nominal_states = sol.states;
  plan_.anchor_time = 0;
  plan_.basis_step = 0;
  plan_.ready_step = -1;
  plan_.valid = true;
  K_ = offline_.gains.K;
  applied_K_ = K_;
  predicted_.clear();
  interval_start_ = 0;
  started_ = false;
}

void SmoothController::absorb(NextPlan next, int step) {
  for (auto& e : next.events) events_.push_back(std::move(e));
  solves_.push_back(next.solve);
  if (next.ok) {
    plan_ = std::move(next.plan);
    K_ = next.K;
  } else {
    log(step, EventKind::kFallback, "continuing previous plan");
  }
}

void SmoothController::handoff(int step, const ArmState& measured) {
  const auto& s = settings_;
  const ArmParams& p = s.params;
  const int m = s.horizon.m_smooth;
  const double dt = s.horizon.delta;
  if (started_) {
    if (running_.valid()) {
      absorb(running_.get(), step);
    } else if (ready_) {
      absorb(std::move(*ready_), step);
      ready_.reset();
    }
  }
  started_ = true;
  interval_start_ = step;

  std::vector<ArmInput> v;
  predicted_.assign(1, measured);
  for (int j = 0; j < m; ++j) {
    v.push_back(p.input_box.project(plan_.input_at(step + j)));
    predicted_.push_back(step_nominal(predicted_.back(), v.back(), p, dt));
  }
  const std::vector<ArmState> xs(predicted_.begin(), predicted_.end() - 1);
  applied_K_ = K_;
  IntervalCertificate cert = certify_interval(p, dt, xs, v, applied_K_);
  if (!cert.certified && !applied_K_.isZero()) {
    applied_K_.setZero();
    cert = certify_interval(p, dt, xs, v, applied_K_);
    log(step, EventKind::kFeedbackDisabled, "interval bound not certified");
  }
  HandoffRecord h;
  h.step = step;
  h.target_step = step + m;
  h.center = predicted_.back();
  h.anchor_input = p.input_box.project(plan_.input_at(step + m));
  h.radius = cert.radius;
  h.lambda_bar = cert.lambda_bar;
  h.eta = cert.eta;
  h.eta2 = cert.eta2;
  h.certified = cert.certified;
  handoffs_.push_back(h);
  log(step, EventKind::kHandoff);

  PlanJob job;
  job.settings = s;
  job.terminal = terminal_;
  job.step = step;
  job.center = h.center;
  job.radius = h.radius;
  job.anchor_input = h.anchor_input;
  job.K = K_;
  for (int i = 0; i < s.horizon.N; ++i) {
    job.warm_inputs.push_back(plan_.input_at(step + m + i));
  }
  if (s.threaded) {
    running_ = std::async(std::launch::async, plan_next, std::move(job));
  } else {
    ready_ = plan_next(job);
  }
}

ControlOutput SmoothController::control(int step, const ArmState& measured) {
  const int m = settings_.horizon.m_smooth;
  if (!started_ || step - interval_start_ >= m) handoff(step, measured);
  const int j = step - interval_start_;
  const FeedbackInput fb =
      tube_feedback_input(plan_.input_at(step), applied_K_, measured,
                          predicted_[j], settings_.params.input_box);
  if (fb.saturated) log(step, EventKind::kSaturation);
  ControlOutput out;
  out.input = fb.input;
  out.saturated = fb.saturated;
  out.nominal = predicted_[j];
  out.plan_basis_step = plan_.basis_step;
  out.plan_ready_step = plan_.ready_step;
  return out;
}

// ---------------------------------------------------------------- factory

const std::vector<std::string>& controller_names() {
  static const std::vector<std::string> names{"ideal", "triggered", "smooth"};
  return names;
}

std::unique_ptr<Controller> make_controller(const std::string& name,
                                            ControllerSettings settings) {
  if (name == "ideal") {
    return std::make_unique<IdealController>(std::move(settings));
  }
  if (name == "triggered") {
    return std::make_unique<TriggeredController>(std::move(settings));
  }
  if (name == "smooth") {
    return std::make_unique<SmoothController>(std::move(settings));
  }
  throw std::invalid_argument("unknown controller '" + name + "'");
}

}  // namespace tubempc
