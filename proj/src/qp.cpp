#include "cfc/qp.hpp"

#include <cmath>
#include <limits>

namespace cfc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace

void QpProblem::validate() const {
  require(H.rows() == H.cols(), "qp: H must be square");
  require_dim(f, H.rows(), "qp: f");
  require(C.cols() == H.rows(), "qp: C column mismatch");
  require_dim(l, C.rows(), "qp: l");
  require_dim(u, C.rows(), "qp: u");
}

QpSolution solve_qp(const QpProblem& qp, const QpSettings& st, const Vector* warm_start) {
  qp.validate();
  const Index n = qp.num_vars();
  const Index m = qp.num_rows();

  // Trivially empty feasible set.
  for (Index i = 0; i < m; ++i) {
    if (qp.l(i) == kInf || qp.u(i) == -kInf || qp.u(i) < qp.l(i)) {
      QpSolution sol;
      sol.status = QpStatus::Infeasible;
      sol.x = Vector::Zero(n);
      sol.dual = Vector::Zero(m);
      return sol;
    }
  }

  // Unconstrained fast path: solve H x = -f; accept if all rows hold.
  // Skipped when H is only positive semidefinite (the ADMM iteration below
  // handles that through its proximal regularization).
  {
    Eigen::LLT<Matrix> llt(qp.H);
    if (llt.info() == Eigen::Success) {
      const Vector x = llt.solve(-qp.f);
      bool ok = true;
      if (m > 0) {
        const Vector cx = qp.C * x;
        for (Index i = 0; i < m && ok; ++i) {
          ok = cx(i) >= qp.l(i) - st.tol_abs && cx(i) <= qp.u(i) + st.tol_abs;
        }
      }
      if (ok) {
        QpSolution sol;
        sol.status = QpStatus::Optimal;
        sol.x = x;
        sol.dual = Vector::Zero(m);
        sol.objective = 0.5 * x.dot(qp.H * x) + qp.f.dot(x);
        sol.iterations = 0;
        return sol;
      }
    }
  }

  // Ruiz equilibration: scale variables (D), rows (E) and the cost (c) so
  // the fixed-penalty splitting behaves across badly conditioned instances.
  Vector d = Vector::Ones(n);
  Vector e = Vector::Ones(m);
  double cost_scale = 1.0;
  {
    Matrix hs = qp.H;
    Matrix cs = qp.C;
    for (int pass = 0; pass < 10; ++pass) {
      Vector col_norm = Vector::Zero(n);
      for (Index j = 0; j < n; ++j) {
        double v = hs.col(j).cwiseAbs().maxCoeff();
        if (m > 0) { v = std::max(v, cs.col(j).cwiseAbs().maxCoeff()); }
        col_norm(j) = v;
      }
      Vector dj(n);
      for (Index j = 0; j < n; ++j) {
        dj(j) = col_norm(j) > 1e-12 ? 1.0 / std::sqrt(col_norm(j)) : 1.0;
      }
      Vector ei = Vector::Ones(m);
      for (Index i = 0; i < m; ++i) {
        const double v = cs.row(i).cwiseAbs().maxCoeff();
        ei(i) = v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0;
      }
      hs = dj.asDiagonal() * hs * dj.asDiagonal();
      cs = ei.asDiagonal() * cs * dj.asDiagonal();
      d = d.cwiseProduct(dj);
      e = e.cwiseProduct(ei);
    }
    const double h_scale = hs.cwiseAbs().rowwise().maxCoeff().mean();
    const double f_scale = inf_norm(Vector(d.asDiagonal() * qp.f));
    cost_scale = 1.0 / std::max({h_scale, f_scale, 1e-6});
  }

  const Matrix h_s = cost_scale * Matrix(d.asDiagonal() * qp.H * d.asDiagonal());
  const Vector f_s = cost_scale * Vector(d.asDiagonal() * qp.f);
  const Matrix c_s = e.asDiagonal() * qp.C * d.asDiagonal();
  Vector l_s(m), u_s(m);
  for (Index i = 0; i < m; ++i) {
    l_s(i) = qp.l(i) == -kInf ? -kInf : e(i) * qp.l(i);
    u_s(i) = qp.u(i) == kInf ? kInf : e(i) * qp.u(i);
  }

  // ADMM on the splitting  min 1/2 x'Hx + f'x + I_[l,u](z)  s.t. Cx = z.
  const Matrix kkt =
      h_s + st.sigma * Matrix::Identity(n, n) + st.rho * c_s.transpose() * c_s;
  const Eigen::LLT<Matrix> llt(kkt);
  require(llt.info() == Eigen::Success, "qp: ADMM system factorization failed");

  Vector x = Vector::Zero(n);
  Vector z = Vector::Zero(m);
  Vector y = Vector::Zero(m);
  if (warm_start != nullptr && warm_start->size() == n) {
    x = d.cwiseInverse().cwiseProduct(*warm_start);
    z = (c_s * x).cwiseMax(l_s).cwiseMin(u_s);
  }

  int infeas_streak = 0;
  QpSolution sol;
  sol.dual = Vector::Zero(m);

  for (int iter = 1; iter <= st.max_iter; ++iter) {
    const Vector rhs = st.sigma * x - f_s + c_s.transpose() * (st.rho * z - y);
    const Vector x_next = llt.solve(rhs);
    const Vector cx_relaxed = st.over_relax * (c_s * x_next) + (1.0 - st.over_relax) * z;
    const Vector z_next = (cx_relaxed + y / st.rho).cwiseMax(l_s).cwiseMin(u_s);
    const Vector y_next = y + st.rho * (cx_relaxed - z_next);
    const Vector dy_scaled = y_next - y;

    x = x_next;
    z = z_next;
    y = y_next;

    // Convergence in unscaled quantities.
    const Vector x_us = d.cwiseProduct(x);
    const Vector y_us = e.cwiseProduct(y) / cost_scale;
    const Vector z_us = e.cwiseInverse().cwiseProduct(z);
    const Vector cx = qp.C * x_us;
    const Vector hx = qp.H * x_us;
    const Vector cty = qp.C.transpose() * y_us;
    const double r_prim = m > 0 ? inf_norm(cx - z_us) : 0.0;
    const double r_dual = inf_norm(hx + qp.f + cty);
    const double eps_prim = st.tol_abs + st.tol_rel * std::max(inf_norm(cx), inf_norm(z_us));
    const double eps_dual =
        st.tol_abs + st.tol_rel * std::max({inf_norm(hx), inf_norm(qp.f), inf_norm(cty)});
    if (r_prim <= eps_prim && r_dual <= eps_dual) {
      sol.status = QpStatus::Optimal;
      sol.x = x_us;
      sol.dual = y_us;
      sol.objective = 0.5 * x_us.dot(qp.H * x_us) + qp.f.dot(x_us);
      sol.iterations = iter;
      return sol;
    }

    // Primal infeasibility certificate on the (unscaled) dual increment.
    const Vector dy = e.cwiseProduct(dy_scaled) / cost_scale;
    const double dy_norm = inf_norm(dy);
    if (dy_norm > 1e-14) {
      double support = 0.0;
      bool unbounded_term = false;
      for (Index i = 0; i < m; ++i) {
        const double dyp = std::max(dy(i), 0.0);
        const double dyn = std::min(dy(i), 0.0);
        if (dyp > 0.0) {
          if (qp.u(i) == kInf) {
            if (dyp > st.eps_infeasible * dy_norm) { unbounded_term = true; }
          } else {
            support += qp.u(i) * dyp;
          }
        }
        if (dyn < 0.0) {
          if (qp.l(i) == -kInf) {
            if (-dyn > st.eps_infeasible * dy_norm) { unbounded_term = true; }
          } else {
            support += qp.l(i) * dyn;
          }
        }
      }
      const bool certified = !unbounded_term &&
                             inf_norm(qp.C.transpose() * dy) <= st.eps_infeasible * dy_norm &&
                             support < -st.eps_infeasible * dy_norm;
      infeas_streak = certified ? infeas_streak + 1 : 0;
      if (infeas_streak >= st.infeasible_streak) {
        sol.status = QpStatus::Infeasible;
        sol.x = d.cwiseProduct(x);
        sol.dual = e.cwiseProduct(y) / cost_scale;
        sol.iterations = iter;
        return sol;
      }
    }
  }

  throw NonConverged("solve_qp: iteration limit (" + std::to_string(st.max_iter) +
                     ") exceeded without certificate");
}

double kkt_residual(const QpProblem& qp, const QpSolution& sol) {
  const Vector cx = qp.C * sol.x;
  const double stationarity = inf_norm(qp.H * sol.x + qp.f + qp.C.transpose() * sol.dual);
  double primal = 0.0;
  double comp = 0.0;
  for (Index i = 0; i < qp.num_rows(); ++i) {
    const double viol_u = qp.u(i) == kInf ? 0.0 : std::max(cx(i) - qp.u(i), 0.0);
    const double viol_l = qp.l(i) == -kInf ? 0.0 : std::max(qp.l(i) - cx(i), 0.0);
    primal = std::max({primal, viol_u, viol_l});
    // y_i > 0 pairs with the upper bound, y_i < 0 with the lower bound
    if (sol.dual(i) > 0.0 && qp.u(i) != kInf) {
      comp = std::max(comp, sol.dual(i) * std::abs(qp.u(i) - cx(i)));
    }
    if (sol.dual(i) < 0.0 && qp.l(i) != -kInf) {
      comp = std::max(comp, -sol.dual(i) * std::abs(cx(i) - qp.l(i)));
    }
  }
  return std::max({stationarity, primal, comp});
}

}  // namespace cfc
