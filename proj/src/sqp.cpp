#include "tubempc/sqp.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tubempc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(SqpStatus status) {
  switch (status) {
    case SqpStatus::kConverged:
      return "converged";
    case SqpStatus::kMaxIterations:
      return "max_iterations";
    case SqpStatus::kInfeasible:
      return "infeasible";
  }
  return "unknown";
}

std::vector<VectorXd> rollout(const NonlinearTrackingProblem& problem,
                              const std::vector<VectorXd>& inputs) {
  std::vector<VectorXd> states;
  states.reserve(inputs.size() + 1);
  states.push_back(problem.base.initial_state);
  for (const auto& u : inputs) states.push_back(problem.step(states.back(), u));
  return states;
}

namespace {

struct Iterate {
  std::vector<VectorXd> inputs;
  std::vector<VectorXd> states;
  double cost = 0.0;
  double terminal = 0.0;
  double state_viol = 0.0;
  double merit = 0.0;
};

Iterate evaluate(const NonlinearTrackingProblem& problem,
                 std::vector<VectorXd> inputs) {
  const TrackingProblem& pb = problem.base;
  Iterate it;
  it.states = rollout(problem, inputs);
  it.inputs = std::move(inputs);
  it.cost = tracking_cost(pb, it.states, it.inputs);
  it.terminal = terminal_violation(pb, it.states.back());
  it.state_viol = state_violation(pb, it.states);
  it.merit = it.cost + pb.slack_weight * (it.terminal + it.state_viol);
  return it;
}

VectorXd stack(const std::vector<VectorXd>& v, int m) {
  VectorXd out(static_cast<int>(v.size()) * m);
  for (std::size_t i = 0; i < v.size(); ++i) out.segment(i * m, m) = v[i];
  return out;
}

}  // namespace

SqpResult solve_nlp_sqp(const NonlinearTrackingProblem& problem,
                        const std::vector<VectorXd>& initial_inputs,
                        const SqpSettings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrackingProblem& pb = problem.base;
  pb.validate();
  const int N = pb.horizon;
  const int n = pb.state_dim();
  const int m = pb.input_dim();
  if (static_cast<int>(initial_inputs.size()) != N) {
    throw std::invalid_argument("solve_nlp_sqp: initial guess needs N inputs");
  }
  const QpSolver qp_solver(settings.qp);
  SqpResult result;

  std::vector<VectorXd> guess;
  for (const auto& u : initial_inputs) guess.push_back(pb.input_bounds.project(u));
  Iterate cur = evaluate(problem, guess);
  result.merit_history.push_back(cur.merit);

  Iterate best;
  bool have_best = false;
  auto consider = [&](const Iterate& it) {
    if (it.state_viol > settings.feasibility_tolerance) return;
    if (!have_best || it.merit < best.merit) {
      best = it;
      have_best = true;
    }
  };
  consider(cur);

  SqpStatus status = SqpStatus::kMaxIterations;
  VectorXd dual;
  if (N == 0) status = SqpStatus::kConverged;
  for (int k = 1; k <= settings.max_iterations && N > 0; ++k) {
    AffineDynamics dyn;
    for (int i = 0; i < N; ++i) {
      MatrixXd A(n, n), B(n, m);
      problem.jacobian(cur.states[i], cur.inputs[i], A, B);
      const VectorXd next = problem.step(cur.states[i], cur.inputs[i]);
      dyn.offset.push_back(next - A * cur.states[i] - B * cur.inputs[i]);
      dyn.A.push_back(std::move(A));
      dyn.B.push_back(std::move(B));
    }
    const CondensedQp cq = condense(pb, dyn);
    WarmStart warm;
    warm.primal = VectorXd::Zero(cq.qp.num_variables());
    warm.primal.head(N * m) = stack(cur.inputs, m);
    if (cq.slack_index >= 0) warm.primal[cq.slack_index] = cur.terminal;
    if (dual.size() == cq.qp.num_constraints()) warm.dual = dual;
    const QpSolution qs = qp_solver.solve(cq.qp, &warm);
    result.qp_iterations += qs.iterations;
    if (qs.status != QpStatus::kOptimal) {
      if (k == 1) status = SqpStatus::kInfeasible;
      break;
    }
    dual = qs.dual;

    const VectorXd u_cur = stack(cur.inputs, m);
    const VectorXd step = qs.primal.head(N * m) - u_cur;
    if (step.cwiseAbs().maxCoeff() < settings.step_tolerance) {
      status = SqpStatus::kConverged;
      break;
    }
    // Decrease predicted by the QP model at the full step.
    const double model = qs.objective + cq.cost_constant;
    const double predicted = std::max(0.0, cur.merit - model);

    double alpha = 1.0;
    bool accepted = false;
    for (int b = 0; b <= settings.max_backtracks; ++b) {
      std::vector<VectorXd> trial(N);
      for (int i = 0; i < N; ++i) {
        trial[i] = pb.input_bounds.project(u_cur.segment(i * m, m) +
                                           alpha * step.segment(i * m, m));
      }
      Iterate cand = evaluate(problem, std::move(trial));
      if (cand.merit <= cur.merit - settings.armijo * alpha * predicted) {
        cur = std::move(cand);
        accepted = true;
        break;
      }
      alpha *= settings.backtrack;
    }
    if (!accepted) {
      status = SqpStatus::kConverged;  // no further merit progress possible
      break;
    }
    ++result.iterations;
    result.merit_history.push_back(cur.merit);
    consider(cur);
  }

  if (!have_best) {
    result.status = SqpStatus::kInfeasible;
    result.inputs = cur.inputs;
    result.states = cur.states;
    result.cost = cur.cost;
    result.slack = cur.terminal;
    result.merit = cur.merit;
  } else {
    result.status = status;
    result.feasible = true;
    result.inputs = best.inputs;
    result.states = best.states;
    result.cost = best.cost;
    result.slack = best.terminal;
    result.merit = best.merit;
  }
  result.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

}  // namespace tubempc
