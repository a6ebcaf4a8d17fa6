#pragma once

#include "cfc/types.hpp"

namespace cfc {

/// min 1/2 x^T H x + f^T x  s.t.  l <= C x <= u, with H symmetric positive
/// definite. One-sided rows use +/- infinity bounds.
struct QpProblem {
  Matrix H;
  Vector f;
  Matrix C;
  Vector l, u;

  Index num_vars() const { return H.rows(); }
  Index num_rows() const { return C.rows(); }
  void validate() const;
};

enum class QpStatus { Optimal, Infeasible, NonConverged };

struct QpSolution {
  QpStatus status = QpStatus::NonConverged;
  Vector x;
  Vector dual;      // multipliers for the rows of C
  double objective = 0.0;
  int iterations = 0;
};

struct QpSettings {
  double tol_abs = 1e-6;
  double tol_rel = 1e-6;
  int max_iter = 4000;
  double rho = 1.0;          // fixed penalty
  double sigma = 1e-6;       // proximal regularization
  double over_relax = 1.6;
  double eps_infeasible = 1e-5;
  int infeasible_streak = 50;  // consecutive certificate hits before declaring
};

/// Operator-splitting (ADMM) solve. Throws NonConverged when the iteration
/// cap is exceeded without an optimality or infeasibility certificate.
QpSolution solve_qp(const QpProblem& qp, const QpSettings& settings = {},
                    const Vector* warm_start = nullptr);

/// Max of stationarity, primal-feasibility, and complementary-slackness
/// residuals (infinity norms) at (x, dual).
double kkt_residual(const QpProblem& qp, const QpSolution& sol);

}  // namespace cfc
