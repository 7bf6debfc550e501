#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

#include "tubempc/types.hpp"

namespace tubempc {

#ifdef NDEBUG
inline constexpr bool kCheckDisturbanceDefault = false;
#else
inline constexpr bool kCheckDisturbanceDefault = true;
#endif

/// Planar 3-link arm with absolute joint angles and velocity inputs.
struct ArmParams {
  Eigen::Vector3d link_lengths;
  /// Bounds on (x, y, theta1, theta2, theta3); x and y are normally infinite.
  Box state_box;
  /// Bounds on (omega1, omega2, omega3).
  Box input_box;
  /// 2-norm bound on the additive disturbance.
  double eta1 = 0.0;

  /// Lengths (sqrt 5, sqrt 5, sqrt 10), theta boxes [pi/2, pi] x [0, pi] x
  /// [0, pi/2], inputs in [-pi/16, pi/16], eta1 = 1e-3.
  static ArmParams Default();
  /// Throws std::invalid_argument on nonpositive lengths, crossed boxes,
  /// wrong dimensions or negative eta1.
  void validate() const;
};

/// Admissible state and input region used by the analytic bounds.
struct Region {
  Box state;
  Box input;
};
Region admissible_region(const ArmParams& params);

struct LipschitzConstants {
  double l1 = 0.0;  ///< state modulus
  double l2 = 0.0;  ///< input modulus
};

/// Continuous-time kinematics, returns d/dt of the state.
ArmState dynamics(const ArmState& x, const ArmInput& u, const ArmParams& p);

/// Forward-Euler step of the nominal model.
ArmState step_nominal(const ArmState& x, const ArmInput& u, const ArmParams& p,
                      double dt);

/// Nominal step plus an additive disturbance with norm at most eta1.
ArmState step_real(const ArmState& x, const ArmInput& u, const ArmParams& p,
                   double dt, const ArmState& disturbance,
                   bool check = kCheckDisturbanceDefault);

/// Lipschitz moduli of dynamics() over the region. The input box must be
/// bounded; state coordinates may be unbounded.
LipschitzConstants lipschitz_constants(const ArmParams& p,
                                       const Region& region);

Eigen::Vector2d position_of(const ArmState& x);

/// End-effector position sum_i l_i (cos theta_i, sin theta_i).
Eigen::Vector2d forward_kinematics(const Eigen::Vector3d& theta,
                                   const ArmParams& p);

/// State whose position is the forward kinematics of theta.
ArmState state_from_angles(const Eigen::Vector3d& theta, const ArmParams& p);

/// Uniform draw in [0, 1) from the top 53 bits of one engine output.
double random_uniform(std::mt19937_64& engine);
/// Uniformly distributed direction on the unit sphere in R^n.
Eigen::VectorXd random_unit_vector(std::mt19937_64& engine, int n);

/// Seeded disturbance source: uniform direction on the sphere, magnitude
/// uniform in [0, bound]. Draws are reproducible across platforms.
class DisturbanceSampler {
 public:
  DisturbanceSampler(std::uint64_t seed, double bound);
  ArmState next();
  double bound() const { return bound_; }

 private:
  std::mt19937_64 engine_;
  double bound_;
};

}  // namespace tubempc
