#pragma once

#include <iosfwd>
#include <utility>

#include "cfc/gaussian.hpp"
#include "cfc/mlp.hpp"
#include "cfc/types.hpp"

namespace cfc {

/// Noise covariances are parameterized by log-Cholesky factors and
/// materialized as L L^T + kNoiseFloor I, so unconstrained gradient steps
/// cannot drop an eigenvalue below the floor.
inline constexpr double kNoiseFloor = 1e-8;

/// Linear-Gaussian state-space parameters (latent dim = 2, one input).
///
/// Flattened layout (16 coordinates):
///   [0..3]   A row-major     [4..5]  B
///   [6..9]   C row-major     (phi: the inference-mapping block)
///   [10..12] Sigma_w log-Cholesky (log l00, l10, log l11)
///   [13..15] Sigma_v log-Cholesky
struct LinearGaussianParams {
  Matrix A = Matrix::Zero(2, 2);
  Matrix C = Matrix::Zero(2, 2);
  Matrix B = Matrix::Zero(2, 1);
  Vector lw = Vector::Zero(3), lv = Vector::Zero(3);  // log-Cholesky coordinates

  Matrix sigma_w() const;  // L L^T + floor
  Matrix sigma_v() const;

  static Vector logchol_from_cov(const Matrix& sigma);
  static Matrix chol_from_logchol(const Vector& l);

  static constexpr int kParamCount = 16;
  static constexpr int kPhiBegin = 6;  // flattened C block
  static constexpr int kPhiEnd = 10;
};

/// Deep variant: transition net (z,u) -> (mean, logvar) and observation net
/// z -> (mean, logvar), both input -> 64 -> 64 -> heads with ReLU hiddens.
/// phi is the observation-net parameter block.
struct MlpParams {
  MlpNet transition;   // in 3, out 2
  MlpNet observation;  // in 2, out 2

  MlpParams() : transition(3, 2), observation(2, 2) {}

  int param_count() const { return transition.param_count() + observation.param_count(); }
  int phi_begin() const { return transition.param_count(); }
  int phi_end() const { return param_count(); }
};

enum class ModelKind { Linear, Mlp };

/// Affine local model used by the MPC layer: z' ~ A z + B u + d, noise Q.
struct LinearizedDynamics {
  Matrix A{2, 2};
  Matrix B{2, 1};
  Vector d{2};
  Matrix Q{2, 2};
};

/// Local measurement model for the filter: o ~ C (z - z0) + y0, noise R.
struct LinearizedObservation {
  Matrix C{2, 2};
  Vector y0{2};  // predicted observation at the linearization point
  Matrix R{2, 2};
};

/// Immutable parameter snapshot behind one interface for both variants.
/// The adaptation loop replaces whole values; never mutate a shared one.
class ModelVariant {
 public:
  ModelVariant() : ModelVariant(LinearGaussianParams{}) {}
  explicit ModelVariant(LinearGaussianParams p) : kind_(ModelKind::Linear), lin_(std::move(p)) {}
  explicit ModelVariant(MlpParams p) : kind_(ModelKind::Mlp), mlp_(std::move(p)) {}

  ModelKind kind() const { return kind_; }
  const LinearGaussianParams& linear() const { return lin_; }
  const MlpParams& mlp() const { return mlp_; }

  int param_count() const;
  Vector flatten() const;
  void set_params(const Vector& theta);

  /// Index interval [begin, end) of the inference-mapping block phi.
  std::pair<int, int> phi_range() const;
  Vector phi() const;

  GaussianBelief predict_latent(const GaussianBelief& belief, double u) const;
  GaussianBelief predict_observation(const GaussianBelief& latent) const;
  GaussianBelief decode_physical(const GaussianBelief& latent) const;

  /// log p_theta(o_next | belief, u) where the predictive distribution is
  /// predict_observation(predict_latent(.)), with its exact gradient in the
  /// flattened parameters.
  std::pair<double, Vector> loglik_and_grad(const GaussianBelief& belief, double u,
                                            const Vector& o_next) const;
  double loglik(const GaussianBelief& belief, double u, const Vector& o_next) const;

  /// Same log-likelihood value, but the gradient of the model whose
  /// predictive covariance is a fixed design quantity: only the innovation-
  /// weighted mean path S^{-1} e d(yhat)/d(theta) contributes, and the noise
  /// coordinates are zero. This is the prediction-error score used when the
  /// noise covariances act as conservative proxies rather than fitted
  /// parameters.
  std::pair<double, Vector> loglik_and_grad_mean_path(const GaussianBelief& belief, double u,
                                                      const Vector& o_next) const;

  LinearizedDynamics linearize_dynamics(const Vector& z, double u) const;
  LinearizedObservation linearize_observation(const Vector& z) const;

  void save(std::ostream& os) const;
  static ModelVariant load(std::istream& is);

 private:
  ModelKind kind_;
  LinearGaussianParams lin_;
  MlpParams mlp_;
};

/// Initial linear guess for warm-up: A = 0.9 I, B = (0.05, 0.10), C = I,
/// and isotropic noise at the given stds.
ModelVariant make_linear_initial(double sigma_w, double sigma_v);

/// Small random MLP with variance heads biased to the given stds.
ModelVariant make_mlp_initial(double sigma_w, double sigma_v, std::uint64_t seed);

}  // namespace cfc
