#include "cfc/adapt.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cfc {

void AdaptConfig::validate() const {
  if (!(eta_max > 0.0)) { throw ConfigError("adapt: eta_max must be > 0"); }
  if (!(l_delta > 0.0)) { throw ConfigError("adapt: l_delta must be > 0"); }
  if (!(epsilon > 0.0)) { throw ConfigError("adapt: epsilon must be > 0"); }
  if (!(decay_p > 0.5 && decay_p <= 1.0)) { throw ConfigError("adapt: p must be in (0.5, 1]"); }
  if (!(decay_tau > 0.0)) { throw ConfigError("adapt: tau must be > 0"); }
}

double eta_base(long t_adapt, const AdaptConfig& cfg) {
  if (!cfg.decay) { return cfg.eta_max; }
  return cfg.eta_max / std::pow(1.0 + double(t_adapt) / cfg.decay_tau, cfg.decay_p);
}

double step_size(double s_shifted, long t_adapt, const AdaptConfig& cfg) {
  require(s_shifted >= 0.0, "step_size: shifted surprise must be >= 0");
  return eta_base(t_adapt, cfg) / (1.0 + s_shifted);
}

Vector clip_direction(const Vector& grad, double l_delta) {
  const double norm = grad.norm();
  if (norm <= l_delta || norm == 0.0) { return grad; }
  return grad * (l_delta / norm);
}

double cfi(const Vector& phi_prev, const Vector& phi_next, double epsilon) {
  require(epsilon > 0.0, "cfi: epsilon must be > 0");
  require(phi_prev.size() == phi_next.size(), "cfi: phi dimension mismatch");
  return (phi_next - phi_prev).norm() / epsilon;
}

namespace {

double spectral_radius_2x2_flat(const Vector& theta) {
  const double tr = theta(0) + theta(3);
  const double det = theta(0) * theta(3) - theta(1) * theta(2);
  const double disc = tr * tr - 4.0 * det;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    return std::max(std::abs(0.5 * (tr + s)), std::abs(0.5 * (tr - s)));
  }
  return std::sqrt(std::abs(det));
}

}  // namespace

std::pair<ModelVariant, AdaptState> adapt_step(const ModelVariant& m, const Vector& grad,
                                               double s_shifted, const AdaptState& state,
                                               const AdaptConfig& cfg) {
  AdaptState next = state;
  if (!cfg.enabled) {
    next.last_cfi = 0.0;
    next.last_drift_norm = 0.0;
    next.last_alpha = 0.0;
    return {m, next};
  }
  require_dim(grad, m.param_count(), "adapt_step: grad");

  const double alpha = step_size(s_shifted, state.step_count, cfg);
  const Vector direction = clip_direction(grad, cfg.l_delta);
  const Vector theta = m.flatten();
  Vector theta_next = theta + alpha * direction;

  // Stability guard (linear variant): shrink the whole step until the
  // transition matrix stays inside the spectral-radius bound. Scaling the
  // step keeps the drift bound and the clip direction intact.
  if (cfg.spectral_guard > 0.0 && m.kind() == ModelKind::Linear &&
      spectral_radius_2x2_flat(theta_next) > cfg.spectral_guard) {
    double tau = 1.0;
    for (int i = 0; i < 60 && spectral_radius_2x2_flat(theta + tau * alpha * direction) >
                                  cfg.spectral_guard;
         ++i) {
      tau *= 0.5;
    }
    if (spectral_radius_2x2_flat(theta + tau * alpha * direction) > cfg.spectral_guard) {
      tau = 0.0;  // start already outside the guard: hold position
    }
    theta_next = theta + tau * alpha * direction;
  }

  const double drift = (theta_next - theta).norm();
  if (std::isfinite(cfg.l_delta) && drift > alpha * cfg.l_delta + 1e-12) {
    throw std::logic_error("adapt_step: drift bound violated (internal invariant)");
  }

  ModelVariant out = m;
  out.set_params(theta_next);

  const auto [lo, hi] = m.phi_range();
  next.step_count = state.step_count + 1;
  next.last_alpha = alpha;
  next.last_drift_norm = drift;
  next.last_cfi = cfi(theta.segment(lo, hi - lo), theta_next.segment(lo, hi - lo), cfg.epsilon);
  next.cumulative_drift = state.cumulative_drift + drift;
  return {out, next};
}

}  // namespace cfc
