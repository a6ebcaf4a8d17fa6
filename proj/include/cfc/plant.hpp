#pragma once

#include <vector>

#include "cfc/rng.hpp"
#include "cfc/types.hpp"

namespace cfc {

/// Which environment schedule is active.
enum class ScenarioKind {
  None,              // stationary nominal dynamics (sanity runs)
  AbruptShift,       // A1 -> A2 at t_s
  ObservationDrift,  // C0 -> C0 + kappa(t) dC after t_s
  GradualDrift,      // A1 -> A2 blended by kappa(t) after t_s
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::AbruptShift;
  int t_s = 300;          // shift onset step
  double tau_c = 80.0;    // observation-drift time constant
  double tau_a = 120.0;   // dynamics-drift time constant
  Matrix delta_c;         // observation drift direction (2x2)
  double rho = 0.05;      // tanh nonlinearity gain
  double sigma_w = 0.01;  // process noise std per axis
  double sigma_v = 0.02;  // measurement noise std per axis
  bool noise = true;

  ScenarioSpec();
  void validate() const;
};

struct EnvMatrices {
  Matrix A;  // 2x2
  Matrix B;  // 2x1
  Matrix C;  // 2x2
};

/// Nominal and shifted dynamics matrices.
Matrix env_a1();
Matrix env_a2();
Matrix env_b();

/// Drift progress kappa(t) in [0,1); 0 before t_s.
double drift_kappa(int t, int t_s, double tau);

/// Scheduled environment matrices at step t.
EnvMatrices env_matrices(const ScenarioSpec& spec, int t);

/// Tracking reference for x1: sin(0.02 pi t). x2 is regulated to zero.
double reference(int t);

/// Checks spectral radius of A_env(t) < 1 on a step grid; throws ConfigError.
void validate_schedule(const ScenarioSpec& spec, int horizon);

/// Ground-truth partially observed plant. Owns its noise substreams.
class Plant {
 public:
  Plant(const ScenarioSpec& spec, std::uint64_t seed);

  /// Applies u at step t. Advances the state and returns the observation of
  /// the post-step state, i.e. one call yields the (u_t, o_{t+1}) pair the
  /// surprise computation consumes.
  Vector step(double u);

  const Vector& state() const { return x_; }
  int time() const { return t_; }
  const ScenarioSpec& spec() const { return spec_; }

  /// First few raw draws per substream, for shared-noise audits.
  const std::vector<double>& process_draw_log() const { return w_log_; }
  const std::vector<double>& measurement_draw_log() const { return v_log_; }

 private:
  ScenarioSpec spec_;
  Vector x_;
  int t_ = 0;
  SeededStream w_rng_;
  SeededStream v_rng_;
  std::vector<double> w_log_, v_log_;
};

}  // namespace cfc
