#include "cfc/mpc.hpp"

#include <cmath>
#include <limits>
#include <cstdio>
#include <cstdlib>

namespace cfc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

ConstraintSet::ConstraintSet() { *this = box(3.0, 3.0, 2.0, 0.02, 0.05); }

ConstraintSet ConstraintSet::box(double x1_max, double x2_max, double u_max_in, double c_sens_in,
                                 double delta_in) {
  ConstraintSet cs(Unset{});
  cs.a = Matrix(4, 2);
  cs.a << 1, 0, -1, 0, 0, 1, 0, -1;
  cs.b = Vector(4);
  cs.b << x1_max, x1_max, x2_max, x2_max;
  cs.c_sens = Vector::Constant(4, c_sens_in);
  cs.delta = Vector::Constant(4, delta_in);
  cs.u_min = -u_max_in;
  cs.u_max = u_max_in;
  return cs;
}

void ConstraintSet::validate() const {
  require(a.rows() == b.size() && a.rows() == c_sens.size() && a.rows() == delta.size(),
          "constraints: row count mismatch");
  for (Index i = 0; i < a.rows(); ++i) {
    if (a.row(i).norm() <= 0.0) { throw ConfigError("constraints: zero row"); }
    if (!(delta(i) > 0.0 && delta(i) < 1.0)) {
      throw ConfigError("constraints: delta must be in (0,1)");
    }
  }
  if (!(u_min < u_max)) { throw ConfigError("constraints: u_min must be < u_max"); }
}

MpcConfig::MpcConfig() {
  Q = Matrix(2, 2);
  Q << 8.0, 0.0, 0.0, 3.0;
}

void MpcConfig::validate() const {
  if (horizon < 1) { throw ConfigError("mpc: horizon must be >= 1"); }
  if (!(R > 0.0)) { throw ConfigError("mpc: R must be > 0"); }
  Eigen::SelfAdjointEigenSolver<Matrix> es(Q);
  if (es.eigenvalues().minCoeff() < -1e-12) { throw ConfigError("mpc: Q must be PSD"); }
}

std::vector<Matrix> propagate_uncertainty(const ModelVariant& m, const GaussianBelief& belief,
                                          int horizon) {
  require(horizon >= 1, "propagate_uncertainty: horizon must be >= 1");
  const LinearizedDynamics dyn = m.linearize_dynamics(belief.mean, 0.0);
  std::vector<Matrix> covs;
  covs.reserve(size_t(horizon));
  Matrix sigma = belief.cov;
  for (int k = 0; k < horizon; ++k) {
    sigma = symmetrize(dyn.A * sigma * dyn.A.transpose() + dyn.Q);
    covs.push_back(sigma);
  }
  return covs;
}

Matrix tightening_margins(double s_shifted, const std::vector<Matrix>& covs,
                          const ConstraintSet& constraints) {
  require(s_shifted >= 0.0, "tightening_margins: surprise must be >= 0");
  const Index q = constraints.count();
  Matrix margins(Index(covs.size()), q);
  for (size_t k = 0; k < covs.size(); ++k) {
    const double sigma_k = max_eig_sqrt(covs[k]);
    for (Index i = 0; i < q; ++i) {
      const double quantile = normal_quantile(1.0 - constraints.delta(i));
      const double surprise_branch = constraints.c_sens(i) * s_shifted;
      const double uncertainty_branch = quantile * constraints.a.row(i).norm() * sigma_k;
      margins(Index(k), i) = std::max(surprise_branch, uncertainty_branch);
    }
  }
  return margins;
}

TerminalWeightResult terminal_weight(const Matrix& A, const Matrix& B, const Matrix& Q,
                                     double R) {
  TerminalWeightResult out;
  Matrix p = Q;
  constexpr int kMaxIter = 100000;
  for (int it = 1; it <= kMaxIter; ++it) {
    const Matrix atpa = A.transpose() * p * A;
    const Matrix btpb = B.transpose() * p * B;  // 1x1
    const double gain_denom = R + btpb(0, 0);
    const Matrix atpb = A.transpose() * p * B;  // 2x1
    const Matrix next = symmetrize(Q + atpa - atpb * atpb.transpose() / gain_denom);
    const double diff = (next - p).cwiseAbs().maxCoeff();
    p = next;
    if (diff <= 1e-10) {
      out.P = p;
      out.iterations = it;
      return out;
    }
  }
  out.P = 10.0 * Q;
  out.converged = false;
  out.iterations = kMaxIter;
  return out;
}

QpProblem build_qp(const LinearizedDynamics& dyn, const Vector& z0,
                   const std::vector<Vector>& ref_traj, const Matrix& margins,
                   const ConstraintSet& constraints, const MpcConfig& cfg,
                   const Matrix& terminal_p) {
  const int n_steps = int(ref_traj.size());
  require(n_steps >= 1, "build_qp: empty reference trajectory");
  require(margins.rows() == n_steps, "build_qp: margins/horizon mismatch");
  const Index q = constraints.count();
  require(margins.cols() == q, "build_qp: margins/constraint mismatch");

  // z_k = A^k z0 + sum_j A^j d + sum_j A^{k-1-j} B u_j, stacked over k=1..N.
  Matrix g = Matrix::Zero(2 * n_steps, n_steps);
  Matrix zbar = Matrix::Zero(2, n_steps);  // input-free part per step
  {
    Vector free_part = z0;
    for (int k = 1; k <= n_steps; ++k) {
      free_part = dyn.A * free_part + dyn.d;
      zbar.col(k - 1) = free_part;
      // new input column enters at row block k-1 with coefficient B,
      // previous columns get multiplied by A
      if (k > 1) {
        g.block(2 * (k - 1), 0, 2, k - 1) = dyn.A * g.block(2 * (k - 2), 0, 2, k - 1);
      }
      g.block(2 * (k - 1), k - 1, 2, 1) = dyn.B;
    }
  }

  // Stage weights Q .. Q, terminal P.
  Matrix h = Matrix::Zero(n_steps, n_steps);
  Vector f = Vector::Zero(n_steps);
  for (int k = 1; k <= n_steps; ++k) {
    const Matrix& w = (k == n_steps) ? terminal_p : cfg.Q;
    const Matrix gk = g.block(2 * (k - 1), 0, 2, n_steps);
    const Vector err = zbar.col(k - 1) - ref_traj[size_t(k - 1)];
    h += 2.0 * gk.transpose() * w * gk;
    f += 2.0 * gk.transpose() * w * err;
  }
  h += 2.0 * cfg.R * Matrix::Identity(n_steps, n_steps);
  h = symmetrize(h);

  QpProblem qp;
  qp.H = h;
  qp.f = f;
  const Index n_rows = n_steps + Index(n_steps) * q;
  qp.C = Matrix::Zero(n_rows, n_steps);
  qp.l = Vector::Constant(n_rows, -kInf);
  qp.u = Vector::Constant(n_rows, kInf);

  // input box
  qp.C.topLeftCorner(n_steps, n_steps) = Matrix::Identity(n_steps, n_steps);
  qp.l.head(n_steps).setConstant(constraints.u_min);
  qp.u.head(n_steps).setConstant(constraints.u_max);

  // tightened state rows: a_i^T z_k <= b_i - beta_{i,k}
  Index row = n_steps;
  for (int k = 1; k <= n_steps; ++k) {
    const Matrix gk = g.block(2 * (k - 1), 0, 2, n_steps);
    for (Index i = 0; i < q; ++i, ++row) {
      qp.C.row(row) = constraints.a.row(i) * gk;
      qp.u(row) = constraints.b(i) - margins(k - 1, i) - constraints.a.row(i).dot(zbar.col(k - 1));
    }
  }
  return qp;
}

MpcController::MpcController(ControllerKind kind, MpcConfig cfg, ConstraintSet constraints)
    : kind_(kind), cfg_(std::move(cfg)), constraints_(std::move(constraints)) {
  cfg_.validate();
  constraints_.validate();
}

Matrix MpcController::terminal_for(const ModelVariant& model, const LinearizedDynamics& dyn) {
  if (cfg_.terminal == TerminalWeight::ScaledQ) { return 10.0 * cfg_.Q; }
  const Vector theta = model.flatten();
  if (have_cache_ && (theta - theta_at_last_p_).norm() <= 0.05) { return cached_p_; }
  const TerminalWeightResult res = terminal_weight(dyn.A, dyn.B, cfg_.Q, cfg_.R);
  if (!res.converged) { terminal_fallback_seen_ = true; }
  have_cache_ = true;
  theta_at_last_p_ = theta;
  cached_p_ = res.P;
  return cached_p_;
}

std::pair<double, MpcSolution> MpcController::step(const ModelVariant& model,
                                                   const GaussianBelief& belief, double s_shifted,
                                                   const std::vector<Vector>& ref_traj) {
  const int n_steps = int(ref_traj.size());
  require(n_steps == cfg_.horizon, "mpc_step: reference length must equal the horizon");

  const LinearizedDynamics dyn = model.linearize_dynamics(belief.mean, 0.0);
  const std::vector<Matrix> covs = propagate_uncertainty(model, belief, n_steps);

  Matrix margins;
  switch (kind_) {
    case ControllerKind::Cf:
    case ControllerKind::FixedModel:
    case ControllerKind::NoRateLimit:
      margins = tightening_margins(s_shifted, covs, constraints_);
      break;
    case ControllerKind::Nominal:
    case ControllerKind::NoTightening:
      margins = Matrix::Zero(n_steps, constraints_.count());
      break;
    case ControllerKind::Robust:
      margins = Matrix::Constant(n_steps, constraints_.count(), cfg_.beta_fixed);
      break;
  }

  const Matrix terminal_p = terminal_for(model, dyn);
  const QpProblem qp = build_qp(dyn, belief.mean, ref_traj, margins, constraints_, cfg_, terminal_p);

  MpcSolution out;
  out.margins = margins;
  out.predicted_covs = covs;

  const Vector* warm = (last_u_.size() == n_steps) ? &last_u_ : nullptr;
  QpSolution sol;
  bool needs_relaxation = false;
  try {
    sol = solve_qp(qp, cfg_.qp, warm);
    needs_relaxation = (sol.status == QpStatus::Infeasible);
  } catch (const NonConverged&) {
    // stalled without a certificate: treat like infeasibility and soften
    needs_relaxation = true;
  }

  if (needs_relaxation) {
    // Soften the state rows with quadratic slacks penalized at slack_weight.
    // The penalty dominates the Hessian scale, so this solve runs with a
    // matched splitting penalty and a larger iteration budget.
    const Index q = constraints_.count();
    const Index n_state_rows = Index(n_steps) * q;
    QpProblem soft;
    const Index nv = n_steps + n_state_rows;
    soft.H = Matrix::Zero(nv, nv);
    soft.H.topLeftCorner(n_steps, n_steps) = qp.H;
    soft.H.bottomRightCorner(n_state_rows, n_state_rows) =
        2.0 * cfg_.slack_weight * Matrix::Identity(n_state_rows, n_state_rows);
    soft.f = Vector::Zero(nv);
    soft.f.head(n_steps) = qp.f;
    const Index n_rows = qp.C.rows() + n_state_rows;
    soft.C = Matrix::Zero(n_rows, nv);
    soft.l = Vector::Constant(n_rows, -kInf);
    soft.u = Vector::Constant(n_rows, kInf);
    soft.C.topLeftCorner(qp.C.rows(), n_steps) = qp.C;
    soft.l.head(qp.C.rows()) = qp.l;
    soft.u.head(qp.C.rows()) = qp.u;
    // a_i^T z_k - s_row <= rhs
    soft.C.block(n_steps, n_steps, n_state_rows, n_state_rows) =
        -Matrix::Identity(n_state_rows, n_state_rows);
    // s >= 0
    soft.C.bottomRightCorner(n_state_rows, n_state_rows) =
        Matrix::Identity(n_state_rows, n_state_rows);
    soft.l.tail(n_state_rows).setZero();

    QpSettings soft_settings = cfg_.qp;
    soft_settings.rho = 20.0;
    soft_settings.max_iter = 10 * cfg_.qp.max_iter;

    bool solved = false;
    try {
      sol = solve_qp(soft, soft_settings);
      solved = (sol.status == QpStatus::Optimal);
    } catch (const NonConverged&) {
      solved = false;
    }
    if (solved) {
      sol.x = sol.x.head(n_steps).eval();
    } else {
      // Slack solve stalled: back the margins off toward zero until the hard
      // problem turns feasible; as the last resort plan without state rows
      // (the input box alone is always solvable). The loop must emit some
      // input, and the relaxed flag keeps the event observable.
      for (double tau : {0.5, 0.25, 0.1, 0.0}) {
        const QpProblem backed =
            build_qp(dyn, belief.mean, ref_traj, tau * margins, constraints_, cfg_, terminal_p);
        try {
          sol = solve_qp(backed, cfg_.qp);
        } catch (const NonConverged&) {
          continue;
        }
        if (sol.status == QpStatus::Optimal) {
          solved = true;
          break;
        }
      }
      if (!solved) {
        QpProblem box_only;
        box_only.H = qp.H;
        box_only.f = qp.f;
        box_only.C = qp.C.topRows(n_steps);
        box_only.l = qp.l.head(n_steps);
        box_only.u = qp.u.head(n_steps);
        sol = solve_qp(box_only, cfg_.qp);  // NonConverged here aborts the run
      }
    }
    out.relaxed = true;
    out.feasible = false;
  } else {
    out.feasible = (sol.status == QpStatus::Optimal);
  }

  out.u_seq = sol.x.head(n_steps);
  out.objective = sol.objective;
  out.qp_iterations = sol.iterations;

  // predicted mean trajectory under the plan
  out.predicted_means.reserve(size_t(n_steps));
  Vector z = belief.mean;
  for (int k = 0; k < n_steps; ++k) {
    z = dyn.A * z + dyn.B * out.u_seq(k) + dyn.d;
    out.predicted_means.push_back(z);
  }

  last_u_ = out.u_seq;
  const double u0 = std::clamp(out.u_seq(0), constraints_.u_min, constraints_.u_max);
  return {u0, out};
}

}  // namespace cfc
