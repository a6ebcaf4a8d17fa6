#pragma once

#include <vector>

#include "cfc/gaussian.hpp"
#include "cfc/model.hpp"
#include "cfc/qp.hpp"

namespace cfc {

/// Linear state constraints a_i^T x <= b_i plus an input box. Defaults are
/// the |x1| <= 3, |x2| <= 3, |u| <= 2 task box.
struct ConstraintSet {
  Matrix a;          // (q, 2) rows
  Vector b;          // (q)
  Vector c_sens;     // per-constraint surprise sensitivity c_i
  Vector delta;      // per-constraint violation level delta_i
  double u_min = -2.0;
  double u_max = 2.0;

  ConstraintSet();
  static ConstraintSet box(double x1_max, double x2_max, double u_max, double c_sens,
                           double delta);
  Index count() const { return a.rows(); }
  void validate() const;

 private:
  struct Unset {};
  explicit ConstraintSet(Unset) {}
};

enum class ControllerKind { Cf, Nominal, Robust, FixedModel, NoTightening, NoRateLimit };

enum class TerminalWeight { Riccati, ScaledQ };

struct MpcConfig {
  int horizon = 10;
  Matrix Q;
  double R = 0.05;
  TerminalWeight terminal = TerminalWeight::Riccati;
  double beta_fixed = 0.3;  // robust-baseline constant margin
  QpSettings qp;
  double slack_weight = 1e6;

  MpcConfig();
  void validate() const;
};

struct MpcSolution {
  Vector u_seq;
  std::vector<Vector> predicted_means;  // z_1..z_N
  std::vector<Matrix> predicted_covs;   // Sigma_1..Sigma_N
  Matrix margins;                       // (N, q), row k-1 = step k
  bool feasible = false;
  bool relaxed = false;
  double objective = 0.0;
  int qp_iterations = 0;
};

/// Predicted covariances Sigma_1..Sigma_N under the local dynamics at the
/// belief mean (input-independent for the linear variant).
std::vector<Matrix> propagate_uncertainty(const ModelVariant& m, const GaussianBelief& belief,
                                          int horizon);

/// Per-step margins beta_{i,k} = max(c_i * S, z_{1-delta_i} ||a_i|| sigma_k).
Matrix tightening_margins(double s_shifted, const std::vector<Matrix>& covs,
                          const ConstraintSet& constraints);

/// Discrete Riccati fixed point for (A, B, Q, R); falls back to 10 Q when the
/// iteration does not settle (logged via the returned flag).
struct TerminalWeightResult {
  Matrix P;
  bool converged = true;
  int iterations = 0;
};
TerminalWeightResult terminal_weight(const Matrix& A, const Matrix& B, const Matrix& Q, double R);

/// Condensed QP over the input sequence; states eliminated through the
/// affine local model. ref_traj carries targets for steps 1..N.
QpProblem build_qp(const LinearizedDynamics& dyn, const Vector& z0,
                   const std::vector<Vector>& ref_traj, const Matrix& margins,
                   const ConstraintSet& constraints, const MpcConfig& cfg, const Matrix& terminal_p);

/// Receding-horizon controller. Holds the Riccati cache; one instance per
/// closed loop (mpc_step itself is pure given its inputs).
class MpcController {
 public:
  MpcController(ControllerKind kind, MpcConfig cfg, ConstraintSet constraints);

  /// Plans from the belief and applies the first input. On an infeasible
  /// tightened problem, re-solves with slack-softened state constraints
  /// (weight slack_weight) and flags the solution as relaxed.
  std::pair<double, MpcSolution> step(const ModelVariant& model, const GaussianBelief& belief,
                                      double s_shifted, const std::vector<Vector>& ref_traj);

  ControllerKind kind() const { return kind_; }
  const MpcConfig& config() const { return cfg_; }
  const ConstraintSet& constraints() const { return constraints_; }
  bool terminal_fallback_seen() const { return terminal_fallback_seen_; }

 private:
  Matrix terminal_for(const ModelVariant& model, const LinearizedDynamics& dyn);

  ControllerKind kind_;
  MpcConfig cfg_;
  ConstraintSet constraints_;

  bool have_cache_ = false;
  Vector theta_at_last_p_;
  Matrix cached_p_;
  bool terminal_fallback_seen_ = false;
  Vector last_u_;  // warm start
};

}  // namespace cfc
