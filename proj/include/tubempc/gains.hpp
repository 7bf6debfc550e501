#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "tubempc/types.hpp"

namespace tubempc {

struct CostWeights {
  Eigen::MatrixXd Q;  ///< state weight, symmetric PSD
  Eigen::MatrixXd R;  ///< input weight, symmetric PD
  double slack_weight = 1e4;

  /// Q = 0.1 I5, R = 0.01 I3.
  static CostWeights Default();
  void validate() const;
};

struct GainSet {
  Eigen::MatrixXd K;
  Eigen::MatrixXd P;
  double epsilon = 0.0;
  double closed_loop_spectral_radius = 0.0;
  /// Frobenius norm of the Riccati residual at P.
  double riccati_residual = 0.0;
  int iterations = 0;
};

struct DareOptions {
  double tolerance = 1e-12;
  int max_iterations = 10000;
  /// Relative singular-value threshold of the PBH rank test.
  double stabilizability_tolerance = 1e-9;
};

/// PBH test: rank [A - lambda I, B] = n for every eigenvalue |lambda| >= 1.
bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                     double tolerance = 1e-9);

/// P - (A'PA - A'PB (R + B'PB)^-1 B'PA + Q), Frobenius norm.
double riccati_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                        const Eigen::MatrixXd& P);

/// Stabilizing solution of the discrete algebraic Riccati equation by the
/// structured doubling algorithm, polished with Newton steps.
/// K = -(R + B'PB)^-1 B'PA, so A + BK is the closed loop.
/// Throws NotStabilizable, std::invalid_argument on bad weights and
/// NumericalError when the iteration does not converge.
GainSet solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                   const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                   const DareOptions& options = {});

struct DecreaseReport {
  bool satisfied = true;
  /// max over samples of V(x+) - V(x) + x'(Q + K'RK)x.
  double max_slack = 0.0;
  /// Offending point when not satisfied.
  Eigen::VectorXd witness;
  int samples = 0;
};

/// Samples x with ||x||_P <= epsilon (epsilon = 1 when unset) and checks the
/// terminal decrease along x+ = (A + BK) x.
DecreaseReport verify_terminal_decrease(const GainSet& gain,
                                        const Eigen::MatrixXd& A,
                                        const Eigen::MatrixXd& B,
                                        const CostWeights& weights,
                                        int sample_count,
                                        std::uint64_t seed = 0,
                                        double tolerance = 1e-10);

struct TerminalRadiusOptions {
  double max_radius = 10.0;
  double min_radius = 1e-9;
  int samples = 1000;
  int bisection_steps = 80;
  std::uint64_t seed = 7;
};

/// Largest epsilon (up to max_radius) such that every sampled boundary
/// point x of {||x||_P <= epsilon} has Kx in input_box, x in state_box and
/// (A + BK)x back in the set. Boxes are in deviation coordinates.
/// Throws NumericalError when epsilon collapses below min_radius.
double terminal_radius(const GainSet& gain, const Eigen::MatrixXd& A,
                       const Eigen::MatrixXd& B, const Box& input_box,
                       const Box& state_box,
                       const TerminalRadiusOptions& options = {});

}  // namespace tubempc
