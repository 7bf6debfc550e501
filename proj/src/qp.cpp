#include "tubempc/qp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace tubempc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqualityScale = 1e3;
constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr int kPolishInterval = 25;
// Relative residual level below which the active set is usually settled.
constexpr double kPolishGate = 1e-3;
constexpr double kInteriorPointTolerance = 1e-10;
constexpr int kInteriorPointMaxIterations = 100;

double inf_norm(const VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}
}  // namespace

double QpProblem::objective(const VectorXd& x) const {
  return 0.5 * x.dot(H * x) + g.dot(x);
}

void QpProblem::validate(bool check_psd) const {
  const int n = num_variables();
  const int m = num_constraints();
  if (H.rows() != n || H.cols() != n || C.rows() != m ||
      (m > 0 && C.cols() != n) || upper.size() != m) {
    throw std::invalid_argument("QpProblem: inconsistent dimensions");
  }
  if (!H.allFinite() || !g.allFinite() || !C.allFinite()) {
    throw std::invalid_argument("QpProblem: non-finite data");
  }
  if ((H - H.transpose()).cwiseAbs().maxCoeff() >
      1e-9 * std::max(1.0, H.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("QpProblem: H must be symmetric");
  }
  for (int i = 0; i < m; ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i]) {
      throw std::invalid_argument("QpProblem: lower > upper in row " +
                                  std::to_string(i));
    }
  }
  if (check_psd && n > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(H, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <
        -1e-9 * std::max(1.0, H.cwiseAbs().maxCoeff())) {
      throw std::invalid_argument("QpProblem: H must be positive semidefinite");
    }
  }
}

std::string to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal:
      return "optimal";
    case QpStatus::kInfeasible:
      return "infeasible";
    case QpStatus::kMaxIterations:
      return "max_iterations";
  }
  return "unknown";
}

double KktResiduals::max() const {
  return std::max({primal, dual, complementarity});
}

KktResiduals kkt_residuals(const QpProblem& qp, const VectorXd& x,
                           const VectorXd& y) {
  KktResiduals r;
  const VectorXd cx = qp.C * x;
  for (int i = 0; i < qp.num_constraints(); ++i) {
    r.primal = std::max({r.primal, qp.lower[i] - cx[i], cx[i] - qp.upper[i]});
    double gap = 0.0;
    if (y[i] > 0.0) {
      gap = std::isfinite(qp.upper[i]) ? std::abs(qp.upper[i] - cx[i]) : kInf;
    } else if (y[i] < 0.0) {
      gap = std::isfinite(qp.lower[i]) ? std::abs(cx[i] - qp.lower[i]) : kInf;
    }
    if (y[i] != 0.0) {
      r.complementarity = std::max(r.complementarity, std::abs(y[i]) * gap);
    }
  }
  VectorXd grad = qp.H * x + qp.g;
  if (qp.num_constraints() > 0) grad += qp.C.transpose() * y;
  r.dual = inf_norm(grad);
  return r;
}

namespace {

// Ruiz-equilibrated copy of the problem: Hs = c D H D, gs = c D g,
// Cs = E C D, bounds E l and E u.
struct Scaled {
  MatrixXd H, C;
  VectorXd g, l, u;
  VectorXd D, E;
  double c = 1.0;
};

double clamp_scale(double norm) {
  if (norm < kMinScaling) return 1.0;
  return std::min(norm, kMaxScaling);
}

Scaled equilibrate(const QpProblem& qp, int iterations) {
  const int n = qp.num_variables();
  const int m = qp.num_constraints();
  Scaled s;
  s.H = qp.H;
  s.C = qp.C;
  s.g = qp.g;
  s.D = VectorXd::Ones(n);
  s.E = VectorXd::Ones(m);
  for (int it = 0; it < iterations; ++it) {
    VectorXd d(n), e(m);
    for (int j = 0; j < n; ++j) {
      double norm = s.H.col(j).cwiseAbs().maxCoeff();
      if (m > 0) norm = std::max(norm, s.C.col(j).cwiseAbs().maxCoeff());
      d[j] = 1.0 / std::sqrt(clamp_scale(norm));
    }
    for (int i = 0; i < m; ++i) {
      e[i] = 1.0 / std::sqrt(clamp_scale(s.C.row(i).cwiseAbs().maxCoeff()));
    }
    s.H = d.asDiagonal() * s.H * d.asDiagonal();
    if (m > 0) s.C = e.asDiagonal() * s.C * d.asDiagonal();
    s.g = d.cwiseProduct(s.g);
    s.D = s.D.cwiseProduct(d);
    s.E = s.E.cwiseProduct(e);
    // Cost scaling keeps the objective gradient near unit size.
    double mean_col = 0.0;
    for (int j = 0; j < n; ++j) mean_col += s.H.col(j).cwiseAbs().maxCoeff();
    mean_col /= std::max(1, n);
    const double gamma =
        1.0 / clamp_scale(std::max(mean_col, inf_norm(s.g)));
    s.H *= gamma;
    s.g *= gamma;
    s.c *= gamma;
  }
  s.l = s.E.cwiseProduct(qp.lower);
  s.u = s.E.cwiseProduct(qp.upper);
  return s;
}

VectorXd rho_vector(const QpProblem& qp, double rho) {
  const int m = qp.num_constraints();
  VectorXd r(m);
  for (int i = 0; i < m; ++i) {
    const bool free_row = !std::isfinite(qp.lower[i]) && !std::isfinite(qp.upper[i]);
    if (free_row) {
      r[i] = kRhoMin;
    } else if (qp.lower[i] == qp.upper[i]) {
      r[i] = kRhoEqualityScale * rho;
    } else {
      r[i] = rho;
    }
  }
  return r;
}

struct Polished {
  bool ok = false;
  VectorXd x, y;
};

Polished polish(const QpProblem& qp, const VectorXd& z, const VectorXd& y,
                int refinements) {
  const int n = qp.num_variables();
  const int m = qp.num_constraints();
  std::vector<int> rows;
  std::vector<double> rhs_b;
  for (int i = 0; i < m; ++i) {
    const bool low = z[i] - qp.lower[i] < -y[i];
    const bool upp = qp.upper[i] - z[i] < y[i];
    if (low) {
      rows.push_back(i);
      rhs_b.push_back(qp.lower[i]);
    } else if (upp) {
      rows.push_back(i);
      rhs_b.push_back(qp.upper[i]);
    }
  }
  const int a = static_cast<int>(rows.size());
  MatrixXd kkt = MatrixXd::Zero(n + a, n + a);
  kkt.topLeftCorner(n, n) = qp.H;
  for (int k = 0; k < a; ++k) {
    kkt.block(n + k, 0, 1, n) = qp.C.row(rows[k]);
    kkt.block(0, n + k, n, 1) = qp.C.row(rows[k]).transpose();
  }
  VectorXd rhs(n + a);
  rhs.head(n) = -qp.g;
  for (int k = 0; k < a; ++k) rhs[n + k] = rhs_b[k];
  // Regularized factorization, refined against the exact system.
  const double delta = 1e-9;
  MatrixXd reg = kkt;
  reg.topLeftCorner(n, n).diagonal().array() += delta;
  reg.bottomRightCorner(a, a).diagonal().array() -= delta;
  Eigen::PartialPivLU<MatrixXd> lu(reg);
  VectorXd sol = lu.solve(rhs);
  for (int r = 0; r < refinements; ++r) {
    sol += lu.solve(rhs - kkt * sol);
  }
  Polished out;
  if (!sol.allFinite()) return out;
  out.x = sol.head(n);
  out.y = VectorXd::Zero(m);
  for (int k = 0; k < a; ++k) out.y[rows[k]] = sol[n + k];
  out.ok = true;
  return out;
}

struct InteriorPoint {
  bool ok = false;
  VectorXd x;
  VectorXd y;  ///< in the QpSolution sign convention
  int iterations = 0;
};

// Mehrotra predictor-corrector on G x + s = h, s >= 0 and A x = b, where the
// finite one-sided bounds of l <= Cx <= u form G and h and rows with l = u
// form A.
InteriorPoint interior_point(const QpProblem& qp, double tol, int max_iter) {
  const int n = qp.num_variables();
  const int m = qp.num_constraints();
  std::vector<int> g_row, e_row;
  std::vector<double> g_sign, h_val, b_val;
  for (int i = 0; i < m; ++i) {
    if (qp.lower[i] == qp.upper[i]) {
      e_row.push_back(i);
      b_val.push_back(qp.upper[i]);
      continue;
    }
    if (std::isfinite(qp.upper[i])) {
      g_row.push_back(i);
      g_sign.push_back(1.0);
      h_val.push_back(qp.upper[i]);
    }
    if (std::isfinite(qp.lower[i])) {
      g_row.push_back(i);
      g_sign.push_back(-1.0);
      h_val.push_back(-qp.lower[i]);
    }
  }
  const int p = static_cast<int>(g_row.size());
  const int q = static_cast<int>(e_row.size());
  MatrixXd G(p, n), A(q, n);
  VectorXd h(p), b(q);
  for (int k = 0; k < p; ++k) {
    G.row(k) = g_sign[k] * qp.C.row(g_row[k]);
    h[k] = h_val[k];
  }
  for (int k = 0; k < q; ++k) {
    A.row(k) = qp.C.row(e_row[k]);
    b[k] = b_val[k];
  }

  VectorXd x = VectorXd::Zero(n), y = VectorXd::Zero(q);
  VectorXd s = (h - G * x).cwiseMax(1.0), z = VectorXd::Ones(p);
  const double scale = 1.0 + std::max({inf_norm(qp.g), inf_norm(h), inf_norm(b)});
  InteriorPoint out;

  auto max_step = [](const VectorXd& v, const VectorXd& dv) {
    double a = 1.0;
    for (int i = 0; i < v.size(); ++i) {
      if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
    }
    return a;
  };

  for (int it = 1; it <= max_iter; ++it) {
    const VectorXd r_d = qp.H * x + qp.g + G.transpose() * z + A.transpose() * y;
    const VectorXd r_p = G * x + s - h;
    const VectorXd r_e = A * x - b;
    const double mu = p > 0 ? s.dot(z) / p : 0.0;
    out.iterations = it;
    if (std::max({inf_norm(r_d), inf_norm(r_p), inf_norm(r_e)}) <= tol * scale &&
        mu <= tol * tol * scale) {
      out.ok = true;
      break;
    }

    const VectorXd w = z.cwiseQuotient(s);
    MatrixXd kkt = MatrixXd::Zero(n + q, n + q);
    kkt.topLeftCorner(n, n) = qp.H + G.transpose() * w.asDiagonal() * G;
    kkt.topLeftCorner(n, n).diagonal().array() += 1e-12;
    kkt.topRightCorner(n, q) = A.transpose();
    kkt.bottomLeftCorner(q, n) = A;
    kkt.bottomRightCorner(q, q).diagonal().array() -= 1e-12;
    const Eigen::PartialPivLU<MatrixXd> lu(kkt);

    // Solves for the direction given the complementarity residual r_c.
    auto direction = [&](const VectorXd& r_c, VectorXd& dx, VectorXd& dy,
                         VectorXd& ds, VectorXd& dz) {
      VectorXd rhs(n + q);
      rhs.head(n) =
          -r_d - G.transpose() * (w.cwiseProduct(r_p) - r_c.cwiseQuotient(s));
      rhs.tail(q) = -r_e;
      const VectorXd sol = lu.solve(rhs);
      dx = sol.head(n);
      dy = sol.tail(q);
      dz = w.cwiseProduct(G * dx + r_p) - r_c.cwiseQuotient(s);
      ds = -(r_c + s.cwiseProduct(dz)).cwiseQuotient(z);
    };

    VectorXd dx, dy, ds, dz;
    direction(s.cwiseProduct(z), dx, dy, ds, dz);
    const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
    const double mu_aff =
        p > 0 ? (s + a_aff * ds).dot(z + a_aff * dz) / p : 0.0;
    const double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;
    const VectorXd r_c = s.cwiseProduct(z) + ds.cwiseProduct(dz) -
                         VectorXd::Constant(p, sigma * mu);
    direction(r_c, dx, dy, ds, dz);
    const double a = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
    x += a * dx;
    y += a * dy;
    s += a * ds;
    z += a * dz;
    if (!x.allFinite() || !z.allFinite()) return out;
  }
  out.x = x;
  out.y = VectorXd::Zero(m);
  for (int k = 0; k < p; ++k) out.y[g_row[k]] += g_sign[k] * z[k];
  for (int k = 0; k < q; ++k) out.y[e_row[k]] = y[k];
  return out;
}

}  // namespace

QpSolution QpSolver::solve(const QpProblem& qp, const WarmStart* warm) const {
  const auto t0 = std::chrono::steady_clock::now();
  qp.validate();
  const QpSettings& st = settings_;
  const int n = qp.num_variables();
  const int m = qp.num_constraints();
  QpSolution sol;
  auto finish = [&]() {
    sol.objective = qp.objective(sol.primal);
    sol.solve_time = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return sol;
  };

  // Without constraints the minimizer solves H x = -g.
  if (m == 0 && n > 0) {
    const Eigen::LDLT<MatrixXd> ldlt(qp.H);
    const VectorXd x = ldlt.solve(-qp.g);
    if (ldlt.info() == Eigen::Success && x.allFinite() &&
        inf_norm(qp.H * x + qp.g) <= st.eps_abs) {
      sol.primal = x;
      sol.dual = VectorXd::Zero(0);
      sol.status = QpStatus::kOptimal;
      return finish();
    }
  }

  Scaled s = equilibrate(qp, st.scaling_iterations);
  double rho = st.rho;
  VectorXd rho_vec = rho_vector(qp, rho);
  auto factor = [&]() {
    MatrixXd K = s.H;
    K.diagonal().array() += st.sigma;
    if (m > 0) K += s.C.transpose() * rho_vec.asDiagonal() * s.C;
    return Eigen::LLT<MatrixXd>(K);
  };
  Eigen::LLT<MatrixXd> llt = factor();
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("QpSolver: KKT matrix not positive definite");
  }

  VectorXd xs = VectorXd::Zero(n);
  VectorXd ys = VectorXd::Zero(m);
  if (warm != nullptr && warm->primal.size() == n) {
    xs = warm->primal.cwiseQuotient(s.D);
    if (warm->dual.size() == m) ys = s.c * warm->dual.cwiseQuotient(s.E);
  }
  VectorXd zs = (s.C * xs).cwiseMax(s.l).cwiseMin(s.u);

  const VectorXd Dinv = s.D.cwiseInverse();
  const VectorXd Einv = s.E.cwiseInverse();
  double prim_res = 0.0, dual_res = 0.0, prim_scale = 0.0, dual_scale = 0.0;
  auto residuals = [&]() {
    const VectorXd cx = s.C * xs;
    const VectorXd hx = s.H * xs;
    const VectorXd cty = m > 0 ? VectorXd(s.C.transpose() * ys)
                               : VectorXd(VectorXd::Zero(n));
    prim_res = inf_norm((cx - zs).cwiseProduct(Einv));
    prim_scale = std::max(inf_norm(cx.cwiseProduct(Einv)),
                          inf_norm(zs.cwiseProduct(Einv)));
    dual_res = inf_norm((hx + s.g + cty).cwiseProduct(Dinv)) / s.c;
    dual_scale = std::max({inf_norm(hx.cwiseProduct(Dinv)),
                           inf_norm(s.g.cwiseProduct(Dinv)),
                           inf_norm(cty.cwiseProduct(Dinv))}) /
                 s.c;
  };
  auto converged = [&]() {
    return prim_res <= st.eps_abs + st.eps_rel * prim_scale &&
           dual_res <= st.eps_abs + st.eps_rel * dual_scale;
  };

  // Active-set polish of the current iterate; accepted mid-run only when the
  // result already meets eps_abs on every KKT residual.
  auto try_polish = [&](bool require_certificate) {
    const VectorXd y = s.E.cwiseProduct(ys) / s.c;
    const Polished p = polish(qp, zs.cwiseProduct(Einv), y, st.polish_refinements);
    if (!p.ok) return false;
    const KktResiduals after = kkt_residuals(qp, p.x, p.y);
    if (require_certificate) {
      if (after.max() > st.eps_abs) return false;
    } else {
      const KktResiduals before = kkt_residuals(qp, s.D.cwiseProduct(xs), y);
      if (after.primal > std::max(before.primal, 1e-9) ||
          after.dual > std::max(before.dual, 1e-9) ||
          after.complementarity > std::max(before.complementarity, 1e-9)) {
        return false;
      }
    }
    sol.primal = p.x;
    sol.dual = p.y;
    sol.polished = true;
    return true;
  };

  sol.status = QpStatus::kMaxIterations;
  int k = 0;
  if (n == 0) {
    sol.status = QpStatus::kOptimal;
  }
  for (k = 1; k <= st.max_iterations && n > 0; ++k) {
    VectorXd rhs = st.sigma * xs - s.g;
    if (m > 0) rhs += s.C.transpose() * (rho_vec.cwiseProduct(zs) - ys);
    const VectorXd xt = llt.solve(rhs);
    const VectorXd zt = s.C * xt;
    const VectorXd x_new = st.alpha * xt + (1.0 - st.alpha) * xs;
    const VectorXd z_relax = st.alpha * zt + (1.0 - st.alpha) * zs;
    const VectorXd z_new =
        (z_relax + ys.cwiseQuotient(rho_vec)).cwiseMax(s.l).cwiseMin(s.u);
    const VectorXd dy = rho_vec.cwiseProduct(z_relax - z_new);
    xs = x_new;
    zs = z_new;
    ys += dy;

    residuals();
    if (converged()) {
      sol.status = QpStatus::kOptimal;
      break;
    }

    // Primal infeasibility certificate from the dual increment.
    if (m > 0) {
      const VectorXd dyu = s.E.cwiseProduct(dy);
      const double dyn = inf_norm(dyu);
      if (dyn > 1e-12) {
        const double tol = st.eps_infeasible * dyn;
        const bool stationary =
            inf_norm((s.C.transpose() * dy).cwiseProduct(Dinv)) <= tol;
        if (stationary) {
          double support = 0.0;
          bool valid = true;
          for (int i = 0; i < m && valid; ++i) {
            if (dyu[i] > tol) {
              if (!std::isfinite(qp.upper[i])) valid = false;
              else support += qp.upper[i] * dyu[i];
            } else if (dyu[i] < -tol) {
              if (!std::isfinite(qp.lower[i])) valid = false;
              else support += qp.lower[i] * dyu[i];
            }
          }
          if (valid && support < -tol) {
            sol.status = QpStatus::kInfeasible;
            break;
          }
        }
      }
    }

    if (st.polish && m > 0 && k % kPolishInterval == 0 &&
        prim_res <= kPolishGate * std::max(1.0, prim_scale) &&
        dual_res <= kPolishGate * std::max(1.0, dual_scale) &&
        try_polish(true)) {
      sol.status = QpStatus::kOptimal;
      break;
    }

    if (st.adaptive_rho && m > 0 && k % st.adaptive_rho_interval == 0) {
      const double pr = prim_res / std::max(prim_scale, 1e-10);
      const double dr = dual_res / std::max(dual_scale, 1e-10);
      const double rho_new =
          std::clamp(rho * std::sqrt(pr / std::max(dr, 1e-30)), kRhoMin, kRhoMax);
      if (rho_new > 5.0 * rho || rho_new < 0.2 * rho) {
        // Keep the scaled dual fixed; only the penalty changes.
        rho = rho_new;
        rho_vec = rho_vector(qp, rho);
        llt = factor();
      }
    }
  }
  sol.iterations = std::min(k, st.max_iterations);
  if (sol.polished) return finish();

  sol.primal = s.D.cwiseProduct(xs);
  sol.dual = m > 0 ? VectorXd(s.E.cwiseProduct(ys) / s.c) : VectorXd(VectorXd::Zero(0));
  if (sol.status == QpStatus::kInfeasible) {
    return finish();
  }
  if (st.polish && m > 0) {
    if (sol.status == QpStatus::kOptimal) {
      try_polish(false);
    } else if (try_polish(true)) {
      sol.status = QpStatus::kOptimal;
    }
  }
  if (sol.status == QpStatus::kMaxIterations && st.interior_point_fallback &&
      m > 0) {
    const InteriorPoint ip =
        interior_point(qp, kInteriorPointTolerance, kInteriorPointMaxIterations);
    sol.iterations += ip.iterations;
    if (ip.ok) {
      VectorXd x = ip.x, y = ip.y;
      const Polished pol = polish(qp, qp.C * x, y, st.polish_refinements);
      if (pol.ok && kkt_residuals(qp, pol.x, pol.y).max() <=
                        kkt_residuals(qp, x, y).max()) {
        x = pol.x;
        y = pol.y;
        sol.polished = true;
      }
      if (kkt_residuals(qp, x, y).max() <= st.eps_abs) {
        sol.primal = x;
        sol.dual = y;
        sol.status = QpStatus::kOptimal;
        sol.interior_point = true;
      }
    }
  }
  return finish();
}

QpSolution solve_qp(const QpProblem& qp, const WarmStart* warm,
                    const QpSettings& settings) {
  return QpSolver(settings).solve(qp, warm);
}

namespace {

void write_matrix(std::ostream& out, const MatrixXd& M) {
  for (int i = 0; i < M.rows(); ++i) {
    for (int j = 0; j < M.cols(); ++j) {
      if (j) out << ' ';
      out << M(i, j);
    }
    out << '\n';
  }
}

double read_value(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw std::runtime_error("read_qp: truncated input");
  if (tok == "inf") return kInf;
  if (tok == "-inf") return -kInf;
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("read_qp: bad number '" + tok + "'");
  }
}

MatrixXd read_matrix(std::istream& in, int rows, int cols) {
  MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) M(i, j) = read_value(in);
  }
  return M;
}

}  // namespace

void write_qp(std::ostream& out, const QpProblem& qp) {
  const auto old = out.precision(17);
  out << "qp " << qp.num_variables() << ' ' << qp.num_constraints() << '\n';
  write_matrix(out, qp.H);
  write_matrix(out, qp.g.transpose());
  write_matrix(out, qp.C);
  write_matrix(out, qp.lower.transpose());
  write_matrix(out, qp.upper.transpose());
  out.precision(old);
}

QpProblem read_qp(std::istream& in) {
  std::string magic;
  int n = 0, m = 0;
  if (!(in >> magic >> n >> m) || magic != "qp" || n < 0 || m < 0) {
    throw std::runtime_error("read_qp: bad header");
  }
  QpProblem qp;
  qp.H = read_matrix(in, n, n);
  qp.g = read_matrix(in, 1, n).transpose();
  qp.C = read_matrix(in, m, n);
  qp.lower = read_matrix(in, 1, m).transpose();
  qp.upper = read_matrix(in, 1, m).transpose();
  return qp;
}

}  // namespace tubempc
