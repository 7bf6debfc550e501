#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tubempc/controllers.hpp"
#include "tubempc/gains.hpp"
#include "tubempc/linearize.hpp"
#include "tubempc/plant.hpp"
#include "tubempc/qp.hpp"
#include "tubempc/sim.hpp"
#include "tubempc/tube.hpp"

namespace py = pybind11;
using namespace tubempc;

namespace {

ArmParams params_with(double eta1) {
  ArmParams p = ArmParams::Default();
  if (eta1 >= 0.0) p.eta1 = eta1;
  return p;
}

py::dict run_simulation(const std::string& controller, const std::string& task,
                        std::uint64_t seed, int duration, double eta1,
                        bool disturbance) {
  const ArmParams p = params_with(eta1);
  const Task t = make_task(task, p);
  ControllerSettings s;
  s.params = p;
  s.reference = task_reference(t, s.horizon.delta);
  auto c = make_controller(controller, s);
  SimConfig cfg;
  cfg.duration = duration;
  cfg.apply_disturbance = disturbance;
  SimTrace trace;
  {
    py::gil_scoped_release release;
    trace = run_closed_loop(*c, t, p, seed, cfg);
  }
  const int n = static_cast<int>(trace.records.size());
  Eigen::MatrixXd states(n + 1, kStateDim), inputs(n, kInputDim),
      reference(n, 2);
  for (int i = 0; i < n; ++i) {
    states.row(i) = trace.records[i].state.transpose();
    inputs.row(i) = trace.records[i].input.transpose();
    reference.row(i) = trace.records[i].reference.transpose();
  }
  states.row(n) = trace.final_state.transpose();
  py::dict out;
  out["metrics_json"] = metrics_to_json(compute_metrics(trace, s.weights));
  out["states"] = states;
  out["inputs"] = inputs;
  out["reference"] = reference;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tube-based smooth MPC for a planar 3-link arm";

  m.def(
      "dynamics",
      [](const ArmState& x, const ArmInput& u) {
        return ArmState(dynamics(x, u, ArmParams::Default()));
      },
      py::arg("x"), py::arg("u"));
  m.def(
      "step_nominal",
      [](const ArmState& x, const ArmInput& u, double dt) {
        return ArmState(step_nominal(x, u, ArmParams::Default(), dt));
      },
      py::arg("x"), py::arg("u"), py::arg("dt") = 0.1);
  m.def(
      "forward_kinematics",
      [](const Eigen::Vector3d& theta) {
        return Eigen::Vector2d(forward_kinematics(theta, ArmParams::Default()));
      },
      py::arg("theta"));
  m.def(
      "initial_state",
      [] { return ArmState(default_initial_state(ArmParams::Default())); });

  m.def(
      "linearize",
      [](const ArmState& x, const ArmInput& u, double dt) {
        const LinearizedModel lm = linearize(x, u, ArmParams::Default(), dt);
        return py::make_tuple(Eigen::MatrixXd(lm.A), Eigen::MatrixXd(lm.B),
                              Eigen::VectorXd(lm.offset));
      },
      py::arg("x"), py::arg("u"), py::arg("dt") = 0.1,
      "Returns (A, B, offset) of x+ = A x + B u + dt * offset.");

  m.def(
      "solve_dare",
      [](const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
         const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
        const GainSet g = solve_dare(A, B, Q, R);
        py::dict d;
        d["K"] = g.K;
        d["P"] = g.P;
        d["spectral_radius"] = g.closed_loop_spectral_radius;
        d["residual"] = g.riccati_residual;
        return d;
      },
      py::arg("A"), py::arg("B"), py::arg("Q"), py::arg("R"));

  m.def(
      "solve_qp",
      [](const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
         const Eigen::MatrixXd& C, const Eigen::VectorXd& lower,
         const Eigen::VectorXd& upper) {
        QpProblem qp{H, g, C, lower, upper};
        QpSolution s;
        {
          py::gil_scoped_release release;
          s = solve_qp(qp);
        }
        py::dict d;
        d["x"] = s.primal;
        d["y"] = s.dual;
        d["objective"] = s.objective;
        d["status"] = to_string(s.status);
        d["iterations"] = s.iterations;
        return d;
      },
      py::arg("H"), py::arg("g"), py::arg("C"), py::arg("lower"),
      py::arg("upper"),
      "min 0.5 x'Hx + g'x subject to lower <= Cx <= upper.");

  m.def(
      "tube_radius",
      [](const std::vector<ArmState>& states, const std::vector<ArmInput>& inputs,
         const GainMatrix& K, double eta1) {
        const IntervalCertificate c =
            certify_interval(params_with(eta1), 0.1, states, inputs, K);
        py::dict d;
        d["certified"] = c.certified;
        d["eta"] = c.eta;
        d["eta2"] = c.eta2;
        d["lambda_bar"] = c.lambda_bar;
        d["radius"] = c.radius;
        return d;
      },
      py::arg("states"), py::arg("inputs"), py::arg("K"),
      py::arg("eta1") = -1.0);

  m.def("controller_names", &controller_names);
  m.def("run_simulation", &run_simulation, py::arg("controller"),
        py::arg("task") = "position", py::arg("seed") = 0,
        py::arg("duration") = 0, py::arg("eta1") = -1.0,
        py::arg("disturbance") = true);

  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_RuntimeError);
}
