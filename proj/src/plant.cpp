#include "tubempc/plant.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/SVD>

namespace tubempc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

Box::Box(Eigen::VectorXd lo, Eigen::VectorXd hi)
    : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) {
    throw std::invalid_argument("Box: bound dimensions differ");
  }
}

Box Box::Unbounded(int n) {
  return Box(Eigen::VectorXd::Constant(n, -kInf),
             Eigen::VectorXd::Constant(n, kInf));
}

Box Box::Symmetric(const Eigen::VectorXd& half_width) {
  return Box(-half_width, half_width);
}

bool Box::is_bounded(int i) const {
  return std::isfinite(lower[i]) && std::isfinite(upper[i]);
}

bool Box::all_bounded() const {
  for (int i = 0; i < size(); ++i) {
    if (!is_bounded(i)) return false;
  }
  return true;
}

bool Box::nonempty() const {
  for (int i = 0; i < size(); ++i) {
    if (!(lower[i] <= upper[i])) return false;
  }
  return true;
}

bool Box::contains(const Eigen::VectorXd& v, double tol) const {
  if (v.size() != size()) return false;
  for (int i = 0; i < size(); ++i) {
    if (!(v[i] >= lower[i] - tol && v[i] <= upper[i] + tol)) return false;
  }
  return true;
}

bool Box::contains(const Box& other, double tol) const {
  if (other.size() != size()) return false;
  for (int i = 0; i < size(); ++i) {
    if (other.lower[i] < lower[i] - tol || other.upper[i] > upper[i] + tol) {
      return false;
    }
  }
  return true;
}

Eigen::VectorXd Box::project(const Eigen::VectorXd& v) const {
  return v.cwiseMax(lower).cwiseMin(upper);
}

double Box::violation(const Eigen::VectorXd& v) const {
  double worst = 0.0;
  for (int i = 0; i < size(); ++i) {
    worst = std::max({worst, lower[i] - v[i], v[i] - upper[i]});
  }
  return worst;
}

Eigen::VectorXd Box::magnitude() const {
  return lower.cwiseAbs().cwiseMax(upper.cwiseAbs());
}

ArmParams ArmParams::Default() {
  using std::numbers::pi;
  ArmParams p;
  p.link_lengths << std::sqrt(5.0), std::sqrt(5.0), std::sqrt(10.0);
  Eigen::VectorXd lo(kStateDim), hi(kStateDim);
  lo << -kInf, -kInf, pi / 2, 0.0, 0.0;
  hi << kInf, kInf, pi, pi, pi / 2;
  p.state_box = Box(lo, hi);
  p.input_box = Box::Symmetric(Eigen::VectorXd::Constant(kInputDim, pi / 16));
  p.eta1 = 1e-3;
  return p;
}

void ArmParams::validate() const {
  if (!(link_lengths.array() > 0.0).all() || !link_lengths.allFinite()) {
    throw std::invalid_argument("ArmParams: link lengths must be positive");
  }
  if (state_box.size() != kStateDim || input_box.size() != kInputDim) {
    throw std::invalid_argument("ArmParams: box dimensions must be 5 and 3");
  }
  if (!state_box.nonempty() || !input_box.nonempty()) {
    throw std::invalid_argument("ArmParams: box lower bound exceeds upper");
  }
  if (!(eta1 >= 0.0) || !std::isfinite(eta1)) {
    throw std::invalid_argument("ArmParams: eta1 must be finite and >= 0");
  }
}

Region admissible_region(const ArmParams& params) {
  return Region{params.state_box, params.input_box};
}

ArmState dynamics(const ArmState& x, const ArmInput& u, const ArmParams& p) {
  ArmState dx;
  const auto& l = p.link_lengths;
  dx[kX] = -l[0] * std::sin(x[kTheta1]) * u[0] -
           l[1] * std::sin(x[kTheta2]) * u[1] -
           l[2] * std::sin(x[kTheta3]) * u[2];
  dx[kY] = l[0] * std::cos(x[kTheta1]) * u[0] +
           l[1] * std::cos(x[kTheta2]) * u[1] +
           l[2] * std::cos(x[kTheta3]) * u[2];
  dx[kTheta1] = u[0];
  dx[kTheta2] = u[1];
  dx[kTheta3] = u[2];
  return dx;
}

ArmState step_nominal(const ArmState& x, const ArmInput& u, const ArmParams& p,
                      double dt) {
  return x + dt * dynamics(x, u, p);
}

ArmState step_real(const ArmState& x, const ArmInput& u, const ArmParams& p,
                   double dt, const ArmState& disturbance, bool check) {
  if (check && disturbance.norm() > p.eta1 * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "step_real: disturbance norm " << disturbance.norm()
       << " exceeds eta1 = " << p.eta1;
    throw std::invalid_argument(os.str());
  }
  return step_nominal(x, u, p, dt) + disturbance;
}

namespace {

bool is_point(const Box& box, int first, int count) {
  for (int i = first; i < first + count; ++i) {
    if (!box.is_bounded(i) || box.lower[i] != box.upper[i]) return false;
  }
  return true;
}

}  // namespace

LipschitzConstants lipschitz_constants(const ArmParams& p,
                                       const Region& region) {
  if (region.input.size() != kInputDim || region.state.size() != kStateDim) {
    throw std::invalid_argument("lipschitz_constants: region dimensions");
  }
  if (!region.input.all_bounded()) {
    throw std::invalid_argument(
        "lipschitz_constants: input box must be bounded");
  }
  const Eigen::Vector3d& l = p.link_lengths;
  if (is_point(region.state, kTheta1, 3) && is_point(region.input, 0, 3)) {
    // Single point: the moduli are the exact Jacobian norms there.
    ArmState x = region.state.lower;
    for (int i = 0; i < 2; ++i) {
      if (!std::isfinite(x[i])) x[i] = 0.0;  // f does not depend on (x, y)
    }
    const ArmInput u = region.input.lower;
    StateMatrix a = StateMatrix::Zero();
    InputMatrix b = InputMatrix::Zero();
    for (int i = 0; i < 3; ++i) {
      const double th = x[kTheta1 + i];
      a(kX, kTheta1 + i) = -l[i] * std::cos(th) * u[i];
      a(kY, kTheta1 + i) = -l[i] * std::sin(th) * u[i];
      b(kX, i) = -l[i] * std::sin(th);
      b(kY, i) = l[i] * std::cos(th);
      b(kTheta1 + i, i) = 1.0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> sa(a), sb(b);
    return {sa.singularValues()[0], sb.singularValues()[0]};
  }
  // Column i of dA carries l_i |omega_i| and the position block of B has
  // Frobenius norm sqrt(sum l_i^2).
  const Eigen::Vector3d wbar = region.input.magnitude();
  LipschitzConstants lip;
  lip.l1 = l.cwiseProduct(wbar).norm();
  lip.l2 = std::sqrt(1.0 + l.squaredNorm());
  return lip;
}

Eigen::Vector2d position_of(const ArmState& x) {
  return Eigen::Vector2d(x[kX], x[kY]);
}

Eigen::Vector2d forward_kinematics(const Eigen::Vector3d& theta,
                                   const ArmParams& p) {
  Eigen::Vector2d pos = Eigen::Vector2d::Zero();
  for (int i = 0; i < 3; ++i) {
    pos[0] += p.link_lengths[i] * std::cos(theta[i]);
    pos[1] += p.link_lengths[i] * std::sin(theta[i]);
  }
  return pos;
}

ArmState state_from_angles(const Eigen::Vector3d& theta, const ArmParams& p) {
  ArmState x;
  x.head<2>() = forward_kinematics(theta, p);
  x.tail<3>() = theta;
  return x;
}

DisturbanceSampler::DisturbanceSampler(std::uint64_t seed, double bound)
    : engine_(seed), bound_(bound) {
  if (!(bound >= 0.0)) {
    throw std::invalid_argument("DisturbanceSampler: bound must be >= 0");
  }
}

double random_uniform(std::mt19937_64& engine) {
  // 53 random mantissa bits, identical on every platform.
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

namespace {

double random_normal(std::mt19937_64& engine) {
  const double u1 = 1.0 - random_uniform(engine);  // (0, 1]
  const double u2 = random_uniform(engine);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

Eigen::VectorXd random_unit_vector(std::mt19937_64& engine, int n) {
  Eigen::VectorXd dir(n);
  double norm = 0.0;
  do {
    for (int i = 0; i < n; ++i) dir[i] = random_normal(engine);
    norm = dir.norm();
  } while (norm < 1e-12);
  return dir / norm;
}

ArmState DisturbanceSampler::next() {
  const ArmState dir = random_unit_vector(engine_, kStateDim);
  const double magnitude = bound_ * random_uniform(engine_);
  return dir * magnitude;
}

}  // namespace tubempc
