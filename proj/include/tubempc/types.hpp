#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace tubempc {

inline constexpr int kStateDim = 5;
inline constexpr int kInputDim = 3;

/// (x, y, theta1, theta2, theta3).
using ArmState = Eigen::Matrix<double, kStateDim, 1>;
/// (omega1, omega2, omega3).
using ArmInput = Eigen::Matrix<double, kInputDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;
using InputMatrix = Eigen::Matrix<double, kStateDim, kInputDim>;
using GainMatrix = Eigen::Matrix<double, kInputDim, kStateDim>;

enum StateIndex : int { kX = 0, kY = 1, kTheta1 = 2, kTheta2 = 3, kTheta3 = 4 };

/// Raised when a numerical routine cannot produce a certified answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The pair (A, B) has an uncontrollable mode on or outside the unit circle.
class NotStabilizable : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A tightened constraint set became empty.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, int step)
      : std::runtime_error(what), step_(step) {}
  /// Horizon step whose tightened set is empty, -1 when not step specific.
  int step() const { return step_; }

 private:
  int step_;
};

/// Axis-aligned box. Infinite bounds mark unconstrained coordinates.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Box() = default;
  Box(Eigen::VectorXd lo, Eigen::VectorXd hi);

  static Box Unbounded(int n);
  static Box Symmetric(const Eigen::VectorXd& half_width);

  int size() const { return static_cast<int>(lower.size()); }
  bool is_bounded(int i) const;
  bool all_bounded() const;
  /// True when lower <= upper in every coordinate.
  bool nonempty() const;
  bool contains(const Eigen::VectorXd& v, double tol = 0.0) const;
  bool contains(const Box& other, double tol = 0.0) const;
  Eigen::VectorXd project(const Eigen::VectorXd& v) const;
  /// Largest amount by which v leaves the box (0 when inside).
  double violation(const Eigen::VectorXd& v) const;
  /// Largest absolute value any coordinate of the box can take.
  Eigen::VectorXd magnitude() const;
};

}  // namespace tubempc
