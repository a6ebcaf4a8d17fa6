#pragma once

#include "cfc/types.hpp"

namespace cfc {

/// Gaussian distribution with dense mean and covariance.
///
/// Invariants maintained by every producer in this codebase:
///  * cov is symmetric to within 1e-12 (constructors symmetrize),
///  * lambda_min(cov) >= 1e-10, enforced by additive jitter when a
///    factorization fails rather than by an eigen-decomposition per call.
struct GaussianBelief {
  Vector mean;
  Matrix cov;

  GaussianBelief() = default;
  GaussianBelief(Vector m, Matrix c);

  Index dim() const { return mean.size(); }
};

/// Jitter floor used when repairing a covariance that fails to factorize.
inline constexpr double kCovJitterFloor = 1e-10;

/// (S + S^T)/2
Matrix symmetrize(const Matrix& s);

/// Lower Cholesky factor of a symmetric matrix with one jitter retry
/// (adds 1e-10 * trace(S)/n * I). Throws SingularCovariance if the retry
/// also fails.
Matrix cholesky_spd(const Matrix& s);

/// log N(x; g.mean, g.cov) via the Cholesky factor; never forms an inverse.
double log_density(const GaussianBelief& g, const Vector& x);

/// Pushes a Gaussian through x -> M x + b and adds process noise Q:
/// mean' = M mean + b, cov' = M cov M^T + Q (symmetrized).
GaussianBelief affine_push(const GaussianBelief& g, const Matrix& M, const Vector& b,
                           const Matrix& Q);

/// sqrt(lambda_max(cov)) by power iteration (rel. tol 1e-10, <= 1e4 iterations).
/// Throws NumericalError on non-convergence.
double max_eig_sqrt(const Matrix& cov);

/// Standard normal quantile Phi^{-1}(p) for p in (0,1); accurate to ~1e-14.
double normal_quantile(double p);

}  // namespace cfc
