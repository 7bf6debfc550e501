#include "tubempc/condensed.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace tubempc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

bool has_bound(const Box& b, int i) {
  return std::isfinite(b.lower[i]) || std::isfinite(b.upper[i]);
}

// Rows c_k of the inscribed box |c_k' e| <= radius / sqrt(rank).
MatrixXd terminal_rows(const MatrixXd& W) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (W + W.transpose()));
  const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
  std::vector<int> keep;
  for (int k = 0; k < W.rows(); ++k) {
    if (es.eigenvalues()[k] > 1e-12 * top && top > 0.0) keep.push_back(k);
  }
  MatrixXd rows(keep.size(), W.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    rows.row(r) = std::sqrt(es.eigenvalues()[keep[r]]) *
                  es.eigenvectors().col(keep[r]).transpose();
  }
  return rows;
}
}  // namespace

void TrackingProblem::validate() const {
  const int n = state_dim();
  const int m = input_dim();
  if (horizon < 0) throw std::invalid_argument("TrackingProblem: horizon < 0");
  if (selector.rows() != n || selector.cols() != n || Q.rows() != n ||
      P.rows() != n || R.cols() != m || m == 0) {
    throw std::invalid_argument("TrackingProblem: weight dimensions");
  }
  if (static_cast<int>(reference.size()) != horizon + 1 ||
      static_cast<int>(state_bounds.size()) != horizon + 1) {
    throw std::invalid_argument(
        "TrackingProblem: reference and state bounds need N + 1 entries");
  }
  if (input_bounds.size() != m) {
    throw std::invalid_argument("TrackingProblem: input bound dimension");
  }
  if (terminal.enabled && (terminal.W.rows() != n || terminal.radius < 0.0)) {
    throw std::invalid_argument("TrackingProblem: terminal constraint");
  }
}

std::vector<VectorXd> CondensedQp::inputs(const VectorXd& z) const {
  std::vector<VectorXd> out;
  for (int i = 0; i < horizon; ++i) {
    out.push_back(z.segment(i * input_dim, input_dim));
  }
  return out;
}

std::vector<VectorXd> CondensedQp::states(const VectorXd& z) const {
  const VectorXd X =
      state_map * z.head(horizon * input_dim) + state_offset;
  std::vector<VectorXd> out;
  for (int i = 0; i <= horizon; ++i) {
    out.push_back(X.segment(i * state_dim, state_dim));
  }
  return out;
}

double CondensedQp::slack(const VectorXd& z) const {
  return slack_index >= 0 ? z[slack_index] : 0.0;
}

CondensedQp condense(const TrackingProblem& pb, const AffineDynamics& dyn) {
  pb.validate();
  const int n = pb.state_dim();
  const int m = pb.input_dim();
  const int N = pb.horizon;
  if (static_cast<int>(dyn.A.size()) != N || static_cast<int>(dyn.B.size()) != N ||
      static_cast<int>(dyn.offset.size()) != N) {
    throw std::invalid_argument("condense: dynamics need N entries");
  }
  const int nu = m * N;
  const bool soft = pb.terminal.enabled && pb.terminal.soft;
  const int dim = nu + (soft ? 1 : 0);

  CondensedQp out;
  out.horizon = N;
  out.state_dim = n;
  out.input_dim = m;
  out.slack_index = soft ? nu : -1;

  // Stacked prediction X = G U + F.
  MatrixXd G = MatrixXd::Zero((N + 1) * n, nu);
  VectorXd F((N + 1) * n);
  F.head(n) = pb.initial_state;
  for (int i = 0; i < N; ++i) {
    G.block((i + 1) * n, 0, n, nu) = dyn.A[i] * G.block(i * n, 0, n, nu);
    G.block((i + 1) * n, i * m, n, m) = dyn.B[i];
    F.segment((i + 1) * n, n) = dyn.A[i] * F.segment(i * n, n) + dyn.offset[i];
  }
  out.state_map = G;
  out.state_offset = F;

  const MatrixXd Ws = pb.selector.transpose() * pb.Q * pb.selector;
  const MatrixXd Wt = pb.selector.transpose() * pb.P * pb.selector;
  MatrixXd H = MatrixXd::Zero(dim, dim);
  VectorXd g = VectorXd::Zero(dim);
  double constant = 0.0;
  for (int i = 0; i <= N; ++i) {
    const MatrixXd& W = i < N ? Ws : Wt;
    const auto Gi = G.block(i * n, 0, n, nu);
    const VectorXd ei = F.segment(i * n, n) - pb.reference[i];
    const MatrixXd WG = W * Gi;
    H.topLeftCorner(nu, nu) += 2.0 * Gi.transpose() * WG;
    g.head(nu) += 2.0 * WG.transpose() * ei;
    constant += ei.dot(W * ei);
  }
  for (int i = 0; i < N; ++i) {
    H.block(i * m, i * m, m, m) += 2.0 * pb.R;
  }
  H = 0.5 * (H + H.transpose());
  if (soft) g[nu] = pb.slack_weight;

  // Constraint rows.
  std::vector<VectorXd> rows;
  std::vector<double> lo, hi;
  auto add = [&](const VectorXd& row, double l, double u) {
    rows.push_back(row);
    lo.push_back(l);
    hi.push_back(u);
  };
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < m; ++j) {
      if (!has_bound(pb.input_bounds, j)) continue;
      VectorXd r = VectorXd::Zero(dim);
      r[i * m + j] = 1.0;
      add(r, pb.input_bounds.lower[j], pb.input_bounds.upper[j]);
    }
  }
  out.input_rows = static_cast<int>(rows.size());
  for (int i = 1; i <= N; ++i) {
    const Box& b = pb.state_bounds[i];
    for (int j = 0; j < n; ++j) {
      if (!has_bound(b, j)) continue;
      VectorXd r = VectorXd::Zero(dim);
      r.head(nu) = G.row(i * n + j).transpose();
      const double f = F[i * n + j];
      add(r, b.lower[j] - f, b.upper[j] - f);
    }
  }
  out.state_rows = static_cast<int>(rows.size()) - out.input_rows;
  if (pb.terminal.enabled) {
    const MatrixXd c = terminal_rows(pb.terminal.W);
    const int rank = static_cast<int>(c.rows());
    const double bound =
        rank > 0 ? pb.terminal.radius / std::sqrt(static_cast<double>(rank)) : 0.0;
    const auto GN = G.block(N * n, 0, n, nu);
    const VectorXd eN = F.segment(N * n, n) - pb.reference[N];
    for (int k = 0; k < rank; ++k) {
      VectorXd r = VectorXd::Zero(dim);
      r.head(nu) = (c.row(k) * GN).transpose();
      const double off = c.row(k).dot(eN);
      if (soft) {
        VectorXd up = r, dn = r;
        up[nu] = -1.0;
        dn[nu] = 1.0;
        add(up, -kInf, bound - off);
        add(dn, -bound - off, kInf);
      } else {
        add(r, -bound - off, bound - off);
      }
    }
    if (soft) {
      VectorXd r = VectorXd::Zero(dim);
      r[nu] = 1.0;
      add(r, 0.0, kInf);
    }
  }
  out.terminal_rows =
      static_cast<int>(rows.size()) - out.input_rows - out.state_rows;

  const int k = static_cast<int>(rows.size());
  out.qp.H = H;
  out.qp.g = g;
  out.qp.C.resize(k, dim);
  out.qp.lower.resize(k);
  out.qp.upper.resize(k);
  for (int r = 0; r < k; ++r) {
    out.qp.C.row(r) = rows[r].transpose();
    out.qp.lower[r] = lo[r];
    out.qp.upper[r] = hi[r];
  }
  out.cost_constant = constant;
  return out;
}

double tracking_cost(const TrackingProblem& pb,
                     const std::vector<VectorXd>& states,
                     const std::vector<VectorXd>& inputs) {
  const int N = pb.horizon;
  if (static_cast<int>(states.size()) != N + 1 ||
      static_cast<int>(inputs.size()) != N) {
    throw std::invalid_argument("tracking_cost: trajectory lengths");
  }
  double cost = 0.0;
  for (int i = 0; i < N; ++i) {
    const VectorXd e = pb.selector * (states[i] - pb.reference[i]);
    cost += e.dot(pb.Q * e) + inputs[i].dot(pb.R * inputs[i]);
  }
  const VectorXd e = pb.selector * (states[N] - pb.reference[N]);
  cost += e.dot(pb.P * e);
  return cost;
}

double terminal_violation(const TrackingProblem& pb,
                          const VectorXd& terminal_state) {
  if (!pb.terminal.enabled) return 0.0;
  const MatrixXd c = terminal_rows(pb.terminal.W);
  if (c.rows() == 0) return 0.0;
  const double bound =
      pb.terminal.radius / std::sqrt(static_cast<double>(c.rows()));
  const VectorXd v = c * (terminal_state - pb.reference[pb.horizon]);
  return std::max(0.0, v.cwiseAbs().maxCoeff() - bound);
}

double state_violation(const TrackingProblem& pb,
                       const std::vector<VectorXd>& states) {
  double worst = 0.0;
  for (int i = 1; i <= pb.horizon && i < static_cast<int>(states.size()); ++i) {
    worst = std::max(worst, pb.state_bounds[i].violation(states[i]));
  }
  return worst;
}

}  // namespace tubempc
