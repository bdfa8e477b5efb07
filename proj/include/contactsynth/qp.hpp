#pragma once

/**
 * @file
 * @brief Dense operator-splitting (ADMM) solver for convex quadratic programs
 *
 *   min  1/2 x'Px + q'x   s.t.  l <= Ax <= u
 *
 * with adaptive step size, primal-infeasibility detection and active-set
 * polishing. Termination requires the primal residual ||Ax - z||_inf and
 * the dual residual ||Px + q + A'y||_inf to fall below
 * eps_abs + eps_rel * (scale of the corresponding terms).
 */

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace contactsynth {

struct QpProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;
};

struct QpSettings {
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_abs = 1e-8;
  double eps_rel = 1e-8;
  double eps_prim_inf = 1e-7;
  int max_iter = 20000;
  int check_every = 10;
  bool polish = true;
  bool adaptive_rho = true;
};

enum class QpStatus { Solved, PrimalInfeasible, MaxIterations };

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  bool polished = false;
  double prim_res = 0.0;
  double dual_res = 0.0;
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct KktResiduals {
  double prim, dual, prim_scale, dual_scale;
};

inline KktResiduals kkt_residuals(const QpProblem& pb, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                                  const Eigen::VectorXd& y) {
  const Eigen::VectorXd ax = pb.A * x;
  const Eigen::VectorXd px = pb.P * x;
  const Eigen::VectorXd aty = pb.A.transpose() * y;
  KktResiduals r{};
  r.prim = pb.A.rows() ? (ax - z).lpNorm<Eigen::Infinity>() : 0.0;
  r.dual = (px + pb.q + aty).lpNorm<Eigen::Infinity>();
  r.prim_scale = pb.A.rows() ? std::max(ax.lpNorm<Eigen::Infinity>(), z.lpNorm<Eigen::Infinity>()) : 0.0;
  r.dual_scale = std::max({px.lpNorm<Eigen::Infinity>(), aty.lpNorm<Eigen::Infinity>(),
                           pb.q.size() ? pb.q.lpNorm<Eigen::Infinity>() : 0.0});
  return r;
}

inline bool kkt_ok(const KktResiduals& r, const QpSettings& s) {
  return r.prim <= s.eps_abs + s.eps_rel * r.prim_scale && r.dual <= s.eps_abs + s.eps_rel * r.dual_scale;
}

/// Solves the equality-constrained QP on a guessed active set, corrects the
/// guess a few times (drop the worst wrong-sign multiplier, else add the
/// most violated row) and accepts only a point meeting the full KKT test.
inline bool polish(const QpProblem& pb, const QpSettings& s, const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                   Eigen::VectorXd& x_out, Eigen::VectorXd& y_out, KktResiduals& res_out) {
  const Eigen::Index n = pb.P.rows(), m = pb.A.rows();
  std::vector<int> side(static_cast<std::size_t>(m), 2);  // -1 lower, +1 upper, 0 equality, 2 inactive
  for (Eigen::Index i = 0; i < m; ++i) {
    if (pb.l[i] == pb.u[i]) side[i] = 0;
    else if (pb.l[i] > -kInf && z[i] - pb.l[i] < -y[i]) side[i] = -1;
    else if (pb.u[i] < kInf && pb.u[i] - z[i] < y[i]) side[i] = 1;
  }
  const double delta = 1e-9;
  for (int round = 0; round < 2 * std::max<Eigen::Index>(m, 1) && round < 50; ++round) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < m; ++i)
      if (side[i] != 2) rows.push_back(i);
    const auto k = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = pb.P;
    Eigen::VectorXd rhs(n + k);
    rhs.head(n) = -pb.q;
    for (Eigen::Index r = 0; r < k; ++r) {
      kkt.block(n + r, 0, 1, n) = pb.A.row(rows[r]);
      kkt.block(0, n + r, n, 1) = pb.A.row(rows[r]).transpose();
      rhs[n + r] = side[rows[r]] > 0 ? pb.u[rows[r]] : pb.l[rows[r]];
    }
    Eigen::MatrixXd reg = kkt;
    reg.topLeftCorner(n, n).diagonal().array() += delta;
    reg.bottomRightCorner(k, k).diagonal().array() -= delta;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
    if (ldlt.info() != Eigen::Success) return false;
    Eigen::VectorXd sol = ldlt.solve(rhs);
    for (int it = 0; it < 25; ++it) {
      const Eigen::VectorXd err = rhs - kkt * sol;
      if (err.lpNorm<Eigen::Infinity>() < 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
      sol += ldlt.solve(err);
    }
    if (!sol.allFinite()) return false;
    Eigen::VectorXd x = sol.head(n);
    Eigen::VectorXd yy = Eigen::VectorXd::Zero(m);
    for (Eigen::Index r = 0; r < k; ++r) yy[rows[r]] = sol[n + r];

    const double sign_tol = 1e-10 * (1.0 + yy.lpNorm<Eigen::Infinity>());
    Eigen::Index worst = -1;
    double worst_v = sign_tol;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double wrong = side[i] == -1 ? yy[i] : side[i] == 1 ? -yy[i] : 0.0;
      if (wrong > worst_v) worst_v = wrong, worst = i;
    }
    if (worst >= 0) {
      side[worst] = 2;
      continue;
    }
    const Eigen::VectorXd ax = pb.A * x;
    const double feas_tol = 1e-12 * (1.0 + ax.lpNorm<Eigen::Infinity>());
    worst_v = feas_tol;
    int worst_side = 2;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (side[i] != 2) continue;
      if (pb.l[i] - ax[i] > worst_v) worst_v = pb.l[i] - ax[i], worst = i, worst_side = -1;
      if (ax[i] - pb.u[i] > worst_v) worst_v = ax[i] - pb.u[i], worst = i, worst_side = 1;
    }
    if (worst >= 0) {
      side[worst] = worst_side;
      continue;
    }
    const Eigen::VectorXd zz = ax.cwiseMax(pb.l).cwiseMin(pb.u);
    const KktResiduals res = kkt_residuals(pb, x, zz, yy);
    if (!kkt_ok(res, s)) return false;
    x_out = std::move(x);
    y_out = std::move(yy);
    res_out = res;
    return true;
  }
  return false;
}

}  // namespace detail

namespace detail {

/// Diagonal equilibration of the KKT matrix [P A'; A 0] plus a cost scale.
struct QpScaling {
  Eigen::VectorXd d;  // variable scaling
  Eigen::VectorXd e;  // constraint scaling
  double c = 1.0;     // cost scaling
};

inline QpScaling ruiz_scaling(const QpProblem& pb, int passes = 10) {
  const Eigen::Index n = pb.P.rows(), m = pb.A.rows();
  QpScaling sc{Eigen::VectorXd::Ones(n), Eigen::VectorXd::Ones(m), 1.0};
  Eigen::MatrixXd p = pb.P, a = pb.A;
  auto clip = [](double v) { return std::clamp(v, 1e-4, 1e4); };
  for (int pass = 0; pass < passes; ++pass) {
    Eigen::VectorXd dd(n), ee(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      double nrm = p.col(j).lpNorm<Eigen::Infinity>();
      if (m) nrm = std::max(nrm, a.col(j).lpNorm<Eigen::Infinity>());
      dd[j] = nrm < 1e-4 ? 1.0 : clip(1.0 / std::sqrt(nrm));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const double nrm = a.row(i).lpNorm<Eigen::Infinity>();
      ee[i] = nrm < 1e-4 ? 1.0 : clip(1.0 / std::sqrt(nrm));
    }
    p = dd.asDiagonal() * p * dd.asDiagonal();
    a = ee.asDiagonal() * a * dd.asDiagonal();
    sc.d.array() *= dd.array();
    sc.e.array() *= ee.array();
  }
  double pmean = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) pmean += p.col(j).lpNorm<Eigen::Infinity>();
  pmean = n ? pmean / static_cast<double>(n) : 0.0;
  const double qn = (sc.d.asDiagonal() * pb.q).lpNorm<Eigen::Infinity>();
  const double big = std::max(pmean, qn);
  sc.c = big < 1e-4 ? 1.0 : clip(1.0 / big);
  return sc;
}

}  // namespace detail

inline QpSolution solve_qp(const QpProblem& pb, const QpSettings& s = {}) {
  using detail::kInf;
  const Eigen::Index n = pb.P.rows(), m = pb.A.rows();

  // Work on the equilibrated problem; all stopping tests use original units.
  const detail::QpScaling sc = detail::ruiz_scaling(pb);
  const Eigen::MatrixXd ps = sc.c * sc.d.asDiagonal() * pb.P * sc.d.asDiagonal();
  const Eigen::VectorXd qs = sc.c * sc.d.cwiseProduct(pb.q);
  const Eigen::MatrixXd as = sc.e.asDiagonal() * pb.A * sc.d.asDiagonal();
  Eigen::VectorXd ls(m), us(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    ls[i] = pb.l[i] == -kInf ? -kInf : sc.e[i] * pb.l[i];
    us[i] = pb.u[i] == kInf ? kInf : sc.e[i] * pb.u[i];
  }
  auto unscale_x = [&](const Eigen::VectorXd& xs) -> Eigen::VectorXd { return sc.d.cwiseProduct(xs); };
  auto unscale_z = [&](const Eigen::VectorXd& zs) -> Eigen::VectorXd { return zs.cwiseQuotient(sc.e); };
  auto unscale_y = [&](const Eigen::VectorXd& ys) -> Eigen::VectorXd { return sc.e.cwiseProduct(ys) / sc.c; };

  QpSolution sol;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  if (m) z = z.cwiseMax(ls).cwiseMin(us);

  // Per-row step sizes: stiffer on equalities, minimal on free rows.
  auto rho_vector = [&](double rho) {
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (ls[i] == -kInf && us[i] == kInf) r[i] = 1e-6;
      else if (ls[i] == us[i]) r[i] = 1e3 * rho;
      else r[i] = rho;
    }
    return r;
  };
  double rho = s.rho;
  Eigen::VectorXd rho_v = rho_vector(rho);
  auto factorize = [&]() {
    Eigen::MatrixXd k = ps + as.transpose() * rho_v.asDiagonal() * as;
    k.diagonal().array() += s.sigma;
    return Eigen::LLT<Eigen::MatrixXd>(k);
  };
  Eigen::LLT<Eigen::MatrixXd> llt = factorize();

  Eigen::VectorXd y_prev;
  for (int it = 1; it <= s.max_iter; ++it) {
    y_prev = y;
    const Eigen::VectorXd rhs = s.sigma * x - qs + as.transpose() * (rho_v.cwiseProduct(z) - y);
    const Eigen::VectorXd x_tilde = llt.solve(rhs);
    const Eigen::VectorXd z_tilde = as * x_tilde;
    x = s.alpha * x_tilde + (1.0 - s.alpha) * x;
    const Eigen::VectorXd z_relaxed = s.alpha * z_tilde + (1.0 - s.alpha) * z;
    z = (z_relaxed + y.cwiseQuotient(rho_v)).cwiseMax(ls).cwiseMin(us);
    y += rho_v.cwiseProduct(z_relaxed - z);
    sol.iterations = it;

    if (it % s.check_every != 0 && it != s.max_iter) continue;

    const Eigen::VectorXd xu = unscale_x(x), zu = unscale_z(z), yu = unscale_y(y);
    const auto res = detail::kkt_residuals(pb, xu, zu, yu);
    sol.prim_res = res.prim;
    sol.dual_res = res.dual;
    const bool converged = detail::kkt_ok(res, s);
    if (s.polish && (converged || it >= 2 * s.check_every)) {
      Eigen::VectorXd xp, yp;
      detail::KktResiduals pres{};
      if (detail::polish(pb, s, zu, yu, xp, yp, pres)) {
        x = xp.cwiseQuotient(sc.d);
        y = sc.c * yp.cwiseQuotient(sc.e);
        z = (as * x).cwiseMax(ls).cwiseMin(us);
        sol.prim_res = pres.prim;
        sol.dual_res = pres.dual;
        sol.polished = true;
        sol.status = QpStatus::Solved;
        break;
      }
    }
    if (converged) {
      sol.status = QpStatus::Solved;
      break;
    }

    // Primal infeasibility certificate from the dual iterate difference.
    const Eigen::VectorXd delta_y = sc.e.cwiseProduct(y - y_prev);
    const double dy = delta_y.lpNorm<Eigen::Infinity>();
    if (m && dy > 1e-12) {
      const double aty = (pb.A.transpose() * delta_y).lpNorm<Eigen::Infinity>();
      double support = 0.0;
      bool bounded = true;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (delta_y[i] > 0) {
          if (pb.u[i] == kInf) { bounded = false; break; }
          support += pb.u[i] * delta_y[i];
        } else if (delta_y[i] < 0) {
          if (pb.l[i] == -kInf) { bounded = false; break; }
          support += pb.l[i] * delta_y[i];
        }
      }
      if (bounded && aty <= s.eps_prim_inf * dy && support <= -s.eps_prim_inf * dy) {
        sol.status = QpStatus::PrimalInfeasible;
        break;
      }
    }

    if (s.adaptive_rho) {
      const auto rs = detail::kkt_residuals(QpProblem{ps, qs, as, ls, us}, x, z, y);
      const double pn = rs.prim / (rs.prim_scale + 1e-30);
      const double dn = rs.dual / (rs.dual_scale + 1e-30);
      double new_rho = rho * std::sqrt(pn / (dn + 1e-30));
      new_rho = std::clamp(new_rho, 1e-6, 1e6);
      if (new_rho > 5.0 * rho || new_rho < 0.2 * rho) {
        rho = new_rho;
        rho_v = rho_vector(rho);
        llt = factorize();
      }
    }
  }
  sol.x = unscale_x(x);
  sol.y = unscale_y(y);
  return sol;
}

}  // namespace contactsynth
