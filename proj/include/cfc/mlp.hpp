#pragma once

#include "cfc/types.hpp"

namespace cfc {

/// Fully connected network: input -> 64 -> 64 -> (mean, log-variance),
/// ReLU hidden activations. The two head rows produce a predictive mean and a
/// per-dimension log-variance clamped to [-10, 4].
struct MlpNet {
  Matrix w1, w2, wm, wv;  // (h,in), (h,h), (out,h), (out,h)
  Vector b1, b2, bm, bv;

  static constexpr int kHidden = 64;
  static constexpr double kLogVarLo = -10.0;
  static constexpr double kLogVarHi = 4.0;

  MlpNet() = default;
  MlpNet(int in_dim, int out_dim);

  int in_dim() const { return int(w1.cols()); }
  int out_dim() const { return int(wm.rows()); }
  int param_count() const;

  /// Flattened parameter order: w1, b1, w2, b2, wm, bm, wv, bv (row-major).
  void flatten(double* dst) const;
  void unflatten(const double* src);
};

/// Forward pass cache for one input; reused by Jacobian and backward passes.
struct MlpForward {
  Vector input;
  Vector a1, h1, a2, h2;   // pre/post activations
  Vector mean;
  Vector logvar_raw;       // before clamping
  Vector logvar;           // clamped
  Vector variance;         // exp(logvar)
};

MlpForward mlp_forward(const MlpNet& net, const Vector& input);

/// d mean / d input at the forward point (ReLU masks fixed).
Matrix mlp_mean_jacobian(const MlpNet& net, const MlpForward& f);

/// Gradient accumulator with the same layout as MlpNet::flatten.
struct MlpGrad {
  Matrix w1, w2, wm, wv;
  Vector b1, b2, bm, bv;

  explicit MlpGrad(const MlpNet& net);
  void flatten(double* dst) const;
};

/// Accumulates gradients for dL/d(mean) = gm and dL/d(logvar) = gv through
/// the heads and backbone. Clamp has zero derivative outside (lo, hi).
void mlp_backward(const MlpNet& net, const MlpForward& f, const Vector& gm, const Vector& gv,
                  MlpGrad& grad, Vector* input_grad = nullptr);

/// Accumulates parameter gradients of tr(P^T J) where J = mlp_mean_jacobian.
/// The ReLU masks are treated as locally constant (exact a.e.).
/// cols: restrict to the first `cols` input columns of J (z-block) when >= 0.
void mlp_jacobian_backward(const MlpNet& net, const MlpForward& f, const Matrix& p, int cols,
                           MlpGrad& grad);

/// Finite-difference check of mlp_backward at `n_coords` random parameter
/// coordinates; re-samples the probe while any pre-activation magnitude is
/// below 1e-4 (ReLU kinks break central differences). Returns max rel. error.
double mlp_grad_check(const MlpNet& net, std::uint64_t seed, int n_coords = 64);

}  // namespace cfc
