#pragma once

#include <iosfwd>
#include <string>

#include <Eigen/Core>

namespace tubempc {

/// minimize 1/2 x'Hx + g'x  subject to  lower <= Cx <= upper.
/// Equalities use lower = upper; infinite bounds are allowed.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd C;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int num_variables() const { return static_cast<int>(g.size()); }
  int num_constraints() const { return static_cast<int>(lower.size()); }
  double objective(const Eigen::VectorXd& x) const;
  /// Throws std::invalid_argument on inconsistent sizes, asymmetric H,
  /// non-finite data or lower > upper. Also checks H is PSD when
  /// check_psd is set.
  void validate(bool check_psd = false) const;
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIterations };
std::string to_string(QpStatus status);

struct QpSettings {
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_abs = 1e-7;
  double eps_rel = 1e-7;
  double eps_infeasible = 1e-6;
  int max_iterations = 4000;
  bool adaptive_rho = true;
  int adaptive_rho_interval = 25;
  int scaling_iterations = 10;
  bool polish = true;
  int polish_refinements = 5;
  /// Interior-point solve when the splitting iteration hits max_iterations.
  bool interior_point_fallback = true;
};

/// Dual sign convention: y_i > 0 on active upper bounds, y_i < 0 on active
/// lower bounds, and H x + g + C'y = 0 at optimality.
struct QpSolution {
  Eigen::VectorXd primal;
  Eigen::VectorXd dual;
  double objective = 0.0;
  QpStatus status = QpStatus::kMaxIterations;
  int iterations = 0;
  double solve_time = 0.0;  ///< wall-clock seconds
  bool polished = false;
  /// Solution came from the interior-point fallback.
  bool interior_point = false;
};

struct WarmStart {
  Eigen::VectorXd primal;
  Eigen::VectorXd dual;  ///< may be empty
};

/// Residuals computed from scratch, independent of solver bookkeeping.
struct KktResiduals {
  double primal = 0.0;           ///< max bound violation of Cx
  double dual = 0.0;             ///< ||Hx + g + C'y||_inf
  double complementarity = 0.0;  ///< max |y_i| * distance to its bound
  double max() const;
};
KktResiduals kkt_residuals(const QpProblem& qp, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y);

/// Dense operator-splitting QP solver with Ruiz equilibration, adaptive
/// penalty, infeasibility detection and an active-set polish step.
/// Holds only settings, so one instance may serve any number of solves.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}
  QpSolution solve(const QpProblem& qp, const WarmStart* warm = nullptr) const;
  const QpSettings& settings() const { return settings_; }

 private:
  QpSettings settings_;
};

QpSolution solve_qp(const QpProblem& qp, const WarmStart* warm = nullptr,
                    const QpSettings& settings = {});

/// Plain-text dump: dimensions, then H, g, C, lower, upper row by row with
/// full precision; infinities as `inf` / `-inf`.
void write_qp(std::ostream& out, const QpProblem& qp);
QpProblem read_qp(std::istream& in);

}  // namespace tubempc
