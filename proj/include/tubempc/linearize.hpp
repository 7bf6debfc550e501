#pragma once

#include "tubempc/plant.hpp"

namespace tubempc {

struct ContinuousJacobians {
  StateMatrix A_c;
  InputMatrix B_c;
};

struct DiscreteMatrices {
  StateMatrix A;
  InputMatrix B;
};

/// Affine model f(x, u) ~ A_c x + B_c u + offset about an anchor, together
/// with its Euler discretization x+ = A x + B u + dt * offset.
struct LinearizedModel {
  StateMatrix A;
  InputMatrix B;
  StateMatrix A_c;
  InputMatrix B_c;
  /// Omega = f(anchor) - A_c anchor_state - B_c anchor_input.
  ArmState offset;
  ArmState anchor_state;
  ArmInput anchor_input;
  double dt = 0.0;

  ArmState predict(const ArmState& x, const ArmInput& u) const {
    return A * x + B * u + dt * offset;
  }
  /// Continuous residual f(x, u) - (A_c x + B_c u + Omega).
  ArmState residual(const ArmState& x, const ArmInput& u,
                    const ArmParams& p) const;
};

/// Disturbance budget of one interval.
struct ErrorBudget {
  double eta_H = 0.0;
  double eta2 = 0.0;
  double eta1 = 0.0;
  double eta = 0.0;
};

ContinuousJacobians jacobians(const ArmState& x, const ArmInput& u,
                              const ArmParams& p);
DiscreteMatrices discretize(const StateMatrix& A_c, const InputMatrix& B_c,
                            double dt);
LinearizedModel linearize(const ArmState& x, const ArmInput& u,
                          const ArmParams& p, double dt);

/// Bound eta_H with ||D^2 f(x, u)[d, d]|| <= eta_H ||d||^2 for every (x, u)
/// in the region and every direction d in (state, input) space.
double hessian_bound(const ArmParams& p, const Region& region);

/// eta2 = ||Omega|| + eta_H (l1 dx_radius + l2 du_radius).
double linearization_error_bound(double eta_H, const LipschitzConstants& lip,
                                 double dx_radius, double du_radius,
                                 double offset_norm = 0.0);

double total_disturbance(double eta1, double eta2);

/// Coefficient c with ||r(e)|| <= c ||e||^2, where r is the continuous
/// remainder of the closed-loop deviation dynamics about a nominal pair
/// (x*, v) under u = sat(v + K e) and inputs drawn from the box.
double deviation_remainder_coefficient(const ArmParams& p, const GainMatrix& K,
                                       const Box& input_box);

}  // namespace tubempc
