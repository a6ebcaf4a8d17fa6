#pragma once

#include "cfc/gaussian.hpp"
#include "cfc/model.hpp"

namespace cfc {

/// Online posterior over the latent state plus the latest innovation stats.
struct FilterState {
  GaussianBelief belief;
  double last_surprise_raw = 0.0;
  Vector last_innovation = Vector::Zero(2);
};

struct FilterInit {
  Vector mean = Vector::Zero(2);
  Matrix cov = 0.1 * Matrix::Identity(2, 2);
};

/// Validates the initial covariance; non-SPD is a configuration error.
FilterState init_belief(const FilterInit& init);

/// Predict with the transition model, then measurement-correct with the
/// Joseph-form covariance update (SPD-stable even when the adapted
/// measurement noise becomes small). For the deep variant, the measurement
/// matrix is the observation-mean Jacobian at the predicted mean.
FilterState filter_update(const ModelVariant& m, const FilterState& f, double u,
                          const Vector& o_next);

struct Surprise {
  double raw = 0.0;      // -log p(o | belief, u); may be negative
  double shifted = 0.0;  // half squared Mahalanobis innovation, >= 0
};

/// Predictive surprise of o_next under the one-step-ahead observation
/// distribution. `shifted` subtracts the zero-innovation baseline
/// (0.5 log det 2 pi S), leaving the nonnegative Mahalanobis part.
Surprise surprise(const ModelVariant& m, const FilterState& f, double u, const Vector& o_next);

}  // namespace cfc
