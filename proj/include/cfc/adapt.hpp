#pragma once

#include "cfc/model.hpp"

namespace cfc {

struct AdaptConfig {
  double eta_max = 0.15;    // step-size ceiling
  double l_delta = 10.0;    // gradient-clip norm bound (infinity() disables)
  double epsilon = 1.5;     // CFI normalizer; default eta_max * l_delta
  double decay_p = 0.6;     // base-schedule exponent, in (0.5, 1]
  double decay_tau = 200.0; // base-schedule scale (steps)
  bool decay = true;        // false: eta_base == eta_max (rate-limit ablation)
  bool enabled = true;
  // Keep the transition matrix Schur stable by backtracking a step that
  // would push its spectral radius past the bound (0 disables the guard).
  // Realizes the standing assumption that estimation stays bounded while
  // adapting; without it, weakly excited parameter directions random-walk
  // into unstable ghost models.
  double spectral_guard = 0.995;

  void validate() const;
};

struct AdaptState {
  long step_count = 0;       // adaptation steps since run start
  double last_cfi = 0.0;
  double last_drift_norm = 0.0;
  double last_alpha = 0.0;
  double cumulative_drift = 0.0;
};

/// Base schedule eta_max / (1 + t/tau)^p; satisfies the diminishing-step
/// conditions (divergent sum, convergent sum of squares) for p in (0.5, 1].
double eta_base(long t_adapt, const AdaptConfig& cfg);

/// alpha_t = eta_base(t) / (1 + S_shifted); always <= eta_max.
double step_size(double s_shifted, long t_adapt, const AdaptConfig& cfg);

/// Norm clip: direction preserved, norm capped at l_delta.
Vector clip_direction(const Vector& grad, double l_delta);

/// ||phi_next - phi_prev|| / epsilon.
double cfi(const Vector& phi_prev, const Vector& phi_next, double epsilon);

/// One bounded ascent step theta' = theta + alpha_t clip(grad). Returns the
/// new snapshot and updated bookkeeping. Asserts the per-step drift bound
/// ||theta' - theta|| <= alpha_t * l_delta. With enabled=false this is the
/// identity (baseline controllers share the code path).
std::pair<ModelVariant, AdaptState> adapt_step(const ModelVariant& m, const Vector& grad,
                                               double s_shifted, const AdaptState& state,
                                               const AdaptConfig& cfg);

}  // namespace cfc
