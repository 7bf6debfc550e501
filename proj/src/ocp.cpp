#include "tubempc/ocp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace tubempc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

HorizonConfig HorizonConfig::Make(double delta, double horizon_T,
                                  double smooth_delay_s,
                                  double triggered_delay_s,
                                  HorizonInterpretation interpretation) {
  if (!(delta > 0.0)) throw std::invalid_argument("HorizonConfig: delta <= 0");
  HorizonConfig h;
  h.delta = delta;
  h.horizon_T = horizon_T;
  h.N = static_cast<int>(std::lround(
      interpretation == HorizonInterpretation::kSeconds ? horizon_T / delta
                                                        : horizon_T));
  // 1e-9 guards ratios like 0.3 / 0.1 = 2.9999999999999996.
  h.m_smooth = static_cast<int>(std::ceil(smooth_delay_s / delta - 1e-9));
  h.m_triggered = static_cast<int>(std::ceil(triggered_delay_s / delta - 1e-9));
  h.validate();
  return h;
}

HorizonConfig HorizonConfig::Default() {
  return Make(0.1, 3.0, 0.3, 2.8, HorizonInterpretation::kSeconds);
}

void HorizonConfig::validate() const {
  if (!(delta > 0.0)) throw std::invalid_argument("HorizonConfig: delta <= 0");
  if (N < 1) throw std::invalid_argument("HorizonConfig: N must be >= 1");
  if (m_smooth < 1 || m_smooth > N) {
    throw std::invalid_argument("HorizonConfig: need 1 <= m_smooth <= N");
  }
  if (m_triggered < 0 || m_triggered > N) {
    throw std::invalid_argument("HorizonConfig: need 0 <= m_triggered <= N");
  }
}

std::vector<ArmState> reference_window(const ReferenceFn& reference, int start,
                                       int N) {
  std::vector<ArmState> out;
  out.reserve(N + 1);
  for (int i = 0; i <= N; ++i) {
    ArmState r = ArmState::Zero();
    r.head<2>() = reference(start + i);
    out.push_back(r);
  }
  return out;
}

MatrixXd tracking_selector() {
  MatrixXd S = MatrixXd::Zero(kStateDim, kStateDim);
  S(kX, kX) = 1.0;
  S(kY, kY) = 1.0;
  return S;
}

ArmState tracking_error(const ArmState& x, const ArmState& reference) {
  ArmState e = ArmState::Zero();
  e.head<2>() = x.head<2>() - reference.head<2>();
  return e;
}

double stage_cost(const VectorXd& x_err, const VectorXd& u,
                  const CostWeights& weights) {
  if (x_err.size() != weights.Q.rows() || u.size() != weights.R.rows()) {
    throw std::invalid_argument("stage_cost: dimension mismatch");
  }
  return x_err.dot(weights.Q * x_err) + u.dot(weights.R * u);
}

std::string to_string(OcpStatus status) {
  switch (status) {
    case OcpStatus::kOptimal:
      return "optimal";
    case OcpStatus::kMaxIterations:
      return "max_iterations";
    case OcpStatus::kInfeasible:
      return "infeasible";
  }
  return "unknown";
}

double horizon_cost(const OcpSolution& solution, const CostWeights& weights,
                    const MatrixXd& P, const std::vector<ArmState>& reference) {
  const std::size_t N = solution.inputs.size();
  if (solution.states.size() != N + 1 || reference.size() != N + 1) {
    throw std::invalid_argument("horizon_cost: inconsistent lengths");
  }
  double cost = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    cost += stage_cost(tracking_error(solution.states[i], reference[i]),
                       solution.inputs[i], weights);
  }
  const ArmState e = tracking_error(solution.states[N], reference[N]);
  return cost + e.dot(P * e);
}

namespace {

TrackingProblem base_problem(const ArmState& x0, const CostWeights& weights,
                             const TerminalSpec& terminal,
                             const HorizonConfig& horizon,
                             const std::vector<ArmState>& reference) {
  if (static_cast<int>(reference.size()) != horizon.N + 1) {
    throw std::invalid_argument("OCP: reference needs N + 1 entries");
  }
  TrackingProblem pb;
  pb.horizon = horizon.N;
  pb.initial_state = x0;
  pb.selector = tracking_selector();
  pb.Q = weights.Q;
  pb.R = weights.R;
  pb.P = terminal.P.size() > 0 ? terminal.P : weights.Q;
  for (const auto& r : reference) pb.reference.push_back(r);
  pb.slack_weight = weights.slack_weight;
  pb.terminal.enabled = terminal.enabled;
  pb.terminal.soft = terminal.soft;
  pb.terminal.W = pb.selector.transpose() * pb.P * pb.selector;
  pb.terminal.radius = terminal.epsilon;
  return pb;
}

std::vector<ArmInput> to_inputs(const std::vector<VectorXd>& v) {
  std::vector<ArmInput> out;
  for (const auto& u : v) out.emplace_back(u);
  return out;
}

std::vector<ArmState> to_states(const std::vector<VectorXd>& v) {
  std::vector<ArmState> out;
  for (const auto& x : v) out.emplace_back(x);
  return out;
}

}  // namespace

Ocp2 build_ocp2(const LinearizedModel& model, const TubeProfile& tube,
                const DisturbedStateSet& initial, const TerminalSpec& terminal,
                const CostWeights& weights, const HorizonConfig& horizon,
                const std::vector<ArmState>& reference) {
  horizon.validate();
  if (!tube.feasible) {
    std::ostringstream os;
    os << "build_ocp2: tightened constraint set is empty at step "
       << tube.infeasible_step;
    throw InfeasibleError(os.str(), tube.infeasible_step);
  }
  if (static_cast<int>(tube.state_boxes.size()) != horizon.N + 1) {
    throw std::invalid_argument("build_ocp2: tube length differs from N + 1");
  }
  Ocp2 ocp;
  ocp.problem = base_problem(initial.center, weights, terminal, horizon,
                             reference);
  ocp.problem.state_bounds = tube.state_boxes;
  ocp.problem.input_bounds = tube.input_box;
  for (int i = 0; i < horizon.N; ++i) {
    ocp.dynamics.A.push_back(model.A);
    ocp.dynamics.B.push_back(model.B);
    ocp.dynamics.offset.push_back(model.dt * model.offset);
  }
  ocp.condensed = condense(ocp.problem, ocp.dynamics);
  return ocp;
}

OcpSolution solve_ocp2(const Ocp2& ocp, const QpSolver& solver,
                       const WarmStart* warm) {
  const QpSolution qs = solver.solve(ocp.condensed.qp, warm);
  OcpSolution out;
  out.solve_time = qs.solve_time;
  out.iterations = qs.iterations;
  out.major_iterations = 1;
  switch (qs.status) {
    case QpStatus::kOptimal:
      out.status = OcpStatus::kOptimal;
      break;
    case QpStatus::kMaxIterations:
      out.status = OcpStatus::kMaxIterations;
      break;
    case QpStatus::kInfeasible:
      out.status = OcpStatus::kInfeasible;
      break;
  }
  out.inputs = to_inputs(ocp.condensed.inputs(qs.primal));
  out.states = to_states(ocp.condensed.states(qs.primal));
  out.slack = ocp.condensed.slack(qs.primal);
  out.cost = qs.objective + ocp.condensed.cost_constant -
             ocp.problem.slack_weight * out.slack;
  return out;
}

Ocp1 build_ocp1(const ArmParams& params, const ArmState& x0,
                const CostWeights& weights, const TerminalSpec& terminal,
                const HorizonConfig& horizon,
                const std::vector<ArmState>& reference,
                const TighteningSpec& tightening) {
  horizon.validate();
  if (!x0.allFinite()) throw std::invalid_argument("build_ocp1: x0 not finite");
  if (!params.state_box.contains(x0)) {
    throw InfeasibleError("build_ocp1: initial state outside the state box", 0);
  }
  Ocp1 ocp;
  TrackingProblem pb = base_problem(x0, weights, terminal, horizon, reference);
  for (int i = 0; i <= horizon.N; ++i) {
    const auto t =
        tighten_state_box(params.state_box, i, tightening.eta, tightening.l);
    if (!t.feasible) {
      std::ostringstream os;
      os << "build_ocp1: tightened state box is empty at step " << i;
      throw InfeasibleError(os.str(), i);
    }
    pb.state_bounds.push_back(t.box);
  }
  pb.input_bounds = params.input_box;
  ocp.problem.base = std::move(pb);
  const double dt = horizon.delta;
  ocp.problem.step = [params, dt](const VectorXd& x, const VectorXd& u) {
    return VectorXd(step_nominal(ArmState(x), ArmInput(u), params, dt));
  };
  ocp.problem.jacobian = [params, dt](const VectorXd& x, const VectorXd& u,
                                      MatrixXd& A, MatrixXd& B) {
    const auto J = jacobians(ArmState(x), ArmInput(u), params);
    const auto D = discretize(J.A_c, J.B_c, dt);
    A = D.A;
    B = D.B;
  };
  return ocp;
}

OcpSolution solve_ocp1(const Ocp1& ocp, const std::vector<ArmInput>& guess,
                       const SqpSettings& settings) {
  std::vector<VectorXd> g;
  for (const auto& u : guess) g.emplace_back(u);
  const SqpResult r = solve_nlp_sqp(ocp.problem, g, settings);
  OcpSolution out;
  out.solve_time = r.solve_time;
  out.iterations = r.qp_iterations;
  out.major_iterations = r.iterations;
  out.inputs = to_inputs(r.inputs);
  out.states = to_states(r.states);
  out.cost = r.cost;
  out.slack = r.slack;
  if (!r.feasible || r.status == SqpStatus::kInfeasible) {
    out.status = OcpStatus::kInfeasible;
  } else if (r.status == SqpStatus::kConverged) {
    out.status = OcpStatus::kOptimal;
  } else {
    out.status = OcpStatus::kMaxIterations;
  }
  return out;
}

}  // namespace tubempc
