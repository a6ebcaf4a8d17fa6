#include "cfc/plant.hpp"

#include <cmath>
#include <vector>

namespace cfc {

namespace {

double spectral_radius_2x2(const Matrix& a) {
  const double tr = a(0, 0) + a(1, 1);
  const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  const double disc = tr * tr - 4.0 * det;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    return std::max(std::abs((tr + s) / 2.0), std::abs((tr - s) / 2.0));
  }
  return std::sqrt(det);  // complex pair: |lambda| = sqrt(det)
}

}  // namespace

ScenarioSpec::ScenarioSpec() {
  delta_c = Matrix(2, 2);
  delta_c << 0.35, 0.10, -0.10, 0.25;
}

void ScenarioSpec::validate() const {
  if (t_s < 0) { throw ConfigError("scenario: t_s must be >= 0"); }
  if (tau_c <= 0.0 || tau_a <= 0.0) { throw ConfigError("scenario: tau_c, tau_a must be > 0"); }
  if (rho < 0.0) { throw ConfigError("scenario: rho must be >= 0"); }
  if (sigma_w < 0.0 || sigma_v < 0.0) { throw ConfigError("scenario: noise stds must be >= 0"); }
  require_shape(delta_c, 2, 2, "scenario.delta_c");
}

Matrix env_a1() {
  Matrix a(2, 2);
  a << 0.97, 0.08, -0.12, 0.96;
  return a;
}

Matrix env_a2() {
  Matrix a(2, 2);
  a << 0.90, 0.24, -0.18, 0.91;
  return a;
}

Matrix env_b() {
  Matrix b(2, 1);
  b << 0.05, 0.10;
  return b;
}

double drift_kappa(int t, int t_s, double tau) {
  if (t < t_s) { return 0.0; }
  return 1.0 - std::exp(-double(t - t_s) / tau);
}

EnvMatrices env_matrices(const ScenarioSpec& spec, int t) {
  require(t >= 0, "env_matrices: t must be >= 0");
  EnvMatrices env;
  env.B = env_b();
  env.A = env_a1();
  env.C = Matrix::Identity(2, 2);
  switch (spec.kind) {
    case ScenarioKind::None:
      break;
    case ScenarioKind::AbruptShift:
      if (t >= spec.t_s) { env.A = env_a2(); }
      break;
    case ScenarioKind::ObservationDrift:
      env.C += drift_kappa(t, spec.t_s, spec.tau_c) * spec.delta_c;
      break;
    case ScenarioKind::GradualDrift:
      env.A += drift_kappa(t, spec.t_s, spec.tau_a) * (env_a2() - env_a1());
      break;
  }
  return env;
}

double reference(int t) {
  require(t >= 0, "reference: t must be >= 0");
  return std::sin(0.02 * M_PI * double(t));
}

void validate_schedule(const ScenarioSpec& spec, int horizon) {
  spec.validate();
  for (int t = 0; t <= horizon; ++t) {
    const EnvMatrices env = env_matrices(spec, t);
    if (spectral_radius_2x2(env.A) >= 1.0) {
      throw ConfigError("scenario schedule: A_env(t) not Schur stable at t=" + std::to_string(t));
    }
  }
}

Plant::Plant(const ScenarioSpec& spec, std::uint64_t seed)
    : spec_(spec),
      x_(Vector::Zero(2)),
      w_rng_(seed, Stream::ProcessNoise),
      v_rng_(seed, Stream::MeasurementNoise) {
  spec_.validate();
}

Vector Plant::step(double u) {
  require(std::isfinite(u), "Plant::step: input must be finite");
  const EnvMatrices env = env_matrices(spec_, t_);

  Vector delta(2);
  delta << spec_.rho * std::tanh(x_(0)), 0.0;

  Vector w = Vector::Zero(2);
  Vector v = Vector::Zero(2);
  if (spec_.noise) {
    w << spec_.sigma_w * w_rng_.normal(), spec_.sigma_w * w_rng_.normal();
    v << spec_.sigma_v * v_rng_.normal(), spec_.sigma_v * v_rng_.normal();
    if (w_log_.size() < 5) { w_log_.push_back(w(0)); }
    if (v_log_.size() < 5) { v_log_.push_back(v(0)); }
  }

  x_ = env.A * x_ + env.B * u + delta + w;
  const Vector o = env.C * x_ + v;
  ++t_;

  if (!x_.allFinite() || !o.allFinite()) {
    throw SimulationDiverged("plant state/observation non-finite at t=" + std::to_string(t_));
  }
  return o;
}

}  // namespace cfc
