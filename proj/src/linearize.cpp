#include "tubempc/linearize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tubempc {

ArmState LinearizedModel::residual(const ArmState& x, const ArmInput& u,
                                   const ArmParams& p) const {
  return dynamics(x, u, p) - (A_c * x + B_c * u + offset);
}

ContinuousJacobians jacobians(const ArmState& x, const ArmInput& u,
                              const ArmParams& p) {
  ContinuousJacobians J{StateMatrix::Zero(), InputMatrix::Zero()};
  for (int i = 0; i < 3; ++i) {
    const double l = p.link_lengths[i];
    const double s = std::sin(x[kTheta1 + i]);
    const double c = std::cos(x[kTheta1 + i]);
    J.A_c(kX, kTheta1 + i) = -l * c * u[i];
    J.A_c(kY, kTheta1 + i) = -l * s * u[i];
    J.B_c(kX, i) = -l * s;
    J.B_c(kY, i) = l * c;
    J.B_c(kTheta1 + i, i) = 1.0;
  }
  return J;
}

DiscreteMatrices discretize(const StateMatrix& A_c, const InputMatrix& B_c,
                            double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize: dt must be > 0");
  return {StateMatrix::Identity() + dt * A_c, dt * B_c};
}

LinearizedModel linearize(const ArmState& x, const ArmInput& u,
                          const ArmParams& p, double dt) {
  const auto J = jacobians(x, u, p);
  const auto D = discretize(J.A_c, J.B_c, dt);
  LinearizedModel m;
  m.A = D.A;
  m.B = D.B;
  m.A_c = J.A_c;
  m.B_c = J.B_c;
  m.offset = dynamics(x, u, p) - J.A_c * x - J.B_c * u;
  m.anchor_state = x;
  m.anchor_input = u;
  m.dt = dt;
  return m;
}

namespace {

// sup over unit (a, b) of |a| sqrt(w^2 a^2 + 4 b^2).
double block_curvature(double w) {
  const double w2 = w * w;
  return w2 <= 2.0 ? 2.0 / std::sqrt(4.0 - w2) : std::abs(w);
}

}  // namespace

double hessian_bound(const ArmParams& p, const Region& region) {
  if (region.input.size() != kInputDim || !region.input.all_bounded()) {
    throw std::invalid_argument("hessian_bound: input box must be bounded");
  }
  const Eigen::Vector3d wbar = region.input.magnitude();
  double eta_h = 0.0;
  for (int i = 0; i < 3; ++i) {
    eta_h = std::max(eta_h, p.link_lengths[i] * block_curvature(wbar[i]));
  }
  return eta_h;
}

double linearization_error_bound(double eta_H, const LipschitzConstants& lip,
                                 double dx_radius, double du_radius,
                                 double offset_norm) {
  if (dx_radius < 0.0 || du_radius < 0.0 || eta_H < 0.0 || offset_norm < 0.0) {
    throw std::invalid_argument("linearization_error_bound: negative argument");
  }
  return offset_norm + eta_H * (lip.l1 * dx_radius + lip.l2 * du_radius);
}

double total_disturbance(double eta1, double eta2) {
  if (eta1 < 0.0 || eta2 < 0.0) {
    throw std::invalid_argument("total_disturbance: negative argument");
  }
  return eta1 + eta2;
}

double deviation_remainder_coefficient(const ArmParams& p, const GainMatrix& K,
                                       const Box& input_box) {
  if (input_box.size() != kInputDim || !input_box.all_bounded()) {
    throw std::invalid_argument(
        "deviation_remainder_coefficient: input box must be bounded");
  }
  const Eigen::Vector3d wbar = input_box.magnitude();
  double c = 0.0;
  for (int i = 0; i < 3; ++i) {
    c += p.link_lengths[i] * (0.5 * wbar[i] + K.row(i).norm());
  }
  return c;
}

}  // namespace tubempc
