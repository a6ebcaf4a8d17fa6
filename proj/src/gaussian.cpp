#include "cfc/gaussian.hpp"

#include <cmath>

namespace cfc {

GaussianBelief::GaussianBelief(Vector m, Matrix c) : mean(std::move(m)), cov(std::move(c)) {
  require(cov.rows() == cov.cols(), "GaussianBelief: covariance must be square");
  require(mean.size() == cov.rows(), "GaussianBelief: mean/cov dimension mismatch");
  cov = symmetrize(cov);
}

Matrix symmetrize(const Matrix& s) {
  return 0.5 * (s + s.transpose());
}

Matrix cholesky_spd(const Matrix& s) {
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() == Eigen::Success) { return llt.matrixL(); }
  const Index n = s.rows();
  const double jitter = kCovJitterFloor * std::max(s.trace() / double(n), 1.0);
  Matrix repaired = s + jitter * Matrix::Identity(n, n);
  llt.compute(repaired);
  if (llt.info() != Eigen::Success) {
    throw SingularCovariance("cholesky_spd: factorization failed after jitter retry");
  }
  return llt.matrixL();
}

double log_density(const GaussianBelief& g, const Vector& x) {
  require_dim(x, g.dim(), "log_density: x");
  const Matrix L = cholesky_spd(g.cov);
  // Solve L y = (x - mean); quadratic form is |y|^2, logdet = 2 sum log L_ii.
  const Vector y = L.triangularView<Eigen::Lower>().solve(x - g.mean);
  double logdet = 0.0;
  for (Index i = 0; i < L.rows(); ++i) { logdet += std::log(L(i, i)); }
  logdet *= 2.0;
  const double n = double(g.dim());
  return -0.5 * y.squaredNorm() - 0.5 * (n * std::log(2.0 * M_PI) + logdet);
}

GaussianBelief affine_push(const GaussianBelief& g, const Matrix& M, const Vector& b,
                           const Matrix& Q) {
  require(M.cols() == g.dim(), "affine_push: M column mismatch");
  require_dim(b, M.rows(), "affine_push: b");
  require_shape(Q, M.rows(), M.rows(), "affine_push: Q");
  GaussianBelief out;
  out.mean = M * g.mean + b;
  out.cov = symmetrize(M * g.cov * M.transpose() + Q);
  return out;
}

double max_eig_sqrt(const Matrix& cov) {
  require(cov.rows() == cov.cols(), "max_eig_sqrt: matrix must be square");
  const Index n = cov.rows();
  if (n == 0) { return 0.0; }
  const Matrix s = symmetrize(cov);
  if (s.norm() == 0.0) { return 0.0; }

  // Power iteration on the Rayleigh quotient, which is monotone
  // nondecreasing for PSD matrices. Covariances here are often nearly
  // isotropic, where the plain iteration crawls; the increments then form a
  // geometric series (ratio (l2/l1)^2), so an Aitken tail estimate certifies
  // the remaining error and supplies the limit when the ratio has settled.
  Vector v = Vector::Ones(n);
  for (Index i = 0; i < n; ++i) { v(i) += 0.01 * double(i + 1); }
  v.normalize();

  const double row_norm_bound = s.cwiseAbs().rowwise().sum().maxCoeff();
  constexpr int kBatch = 25;
  constexpr int kMaxIter = 10000;
  constexpr double kRelTol = 1e-10;

  double lambda = v.dot(s * v);
  double delta_prev = -1.0;
  double q_prev = -1.0;
  for (int done = 0; done < kMaxIter; done += kBatch) {
    for (int it = 0; it < kBatch; ++it) {
      Vector w = s * v;
      const double norm = w.norm();
      if (norm == 0.0) { return 0.0; }  // start was in the null space of a PSD matrix
      v = w / norm;
    }
    const double next = v.dot(s * v);
    const double delta = next - lambda;
    const double scale = std::max(std::abs(next), 1e-300);
    if (std::abs(delta) <= 1e-13 * scale) { return std::sqrt(std::max(next, 0.0)); }

    if (delta_prev > 0.0 && delta > 0.0) {
      const double q = delta / delta_prev;
      if (q > 0.0 && q < 1.0) {
        const double remaining = delta * q / (1.0 - q);
        if (remaining <= kRelTol * scale) { return std::sqrt(std::max(next, 0.0)); }
        // ratio settled: two-mode tail, extrapolate to the limit
        if (q_prev > 0.0 && std::abs(q - q_prev) <= 0.02 * (1.0 - q)) {
          const double extrapolated = std::min(next + remaining, row_norm_bound);
          return std::sqrt(std::max(extrapolated, 0.0));
        }
      }
      q_prev = (q > 0.0 && q < 1.0) ? q : -1.0;
    }
    delta_prev = delta;
    lambda = next;
  }
  throw NumericalError("max_eig_sqrt: power iteration did not converge");
}

// Acklam's rational approximation with one Halley refinement step through erfc.
double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_quantile: p must be in (0,1)");

  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};

  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // One Halley step against the exact CDF.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

}  // namespace cfc
