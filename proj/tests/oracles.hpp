// Independent reference computations used by the test suites. Everything
// here deliberately avoids the library's fast paths: explicit inverses,
// brute-force sums, particle sets, projected gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "cfc/gaussian.hpp"
#include "cfc/qp.hpp"
#include "cfc/rng.hpp"

namespace cfc::oracle {

/// Gaussian log density through an explicitly inverted covariance.
inline double logpdf_explicit_inverse(const Vector& mean, const Matrix& cov, const Vector& x) {
  const Matrix inv = cov.inverse();
  const double det = cov.determinant();
  const Vector d = x - mean;
  return -0.5 * d.dot(inv * d) -
         0.5 * (double(x.size()) * std::log(2.0 * M_PI) + std::log(det));
}

/// Largest eigenvalue of a symmetric 2x2 or 3x3 via the characteristic
/// polynomial (closed-form roots).
inline double max_eig_closed_form(const Matrix& s) {
  if (s.rows() == 2) {
    const double tr = s(0, 0) + s(1, 1);
    const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
    return 0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
  }
  // symmetric 3x3: trigonometric solution of the characteristic cubic
  const double q = s.trace() / 3.0;
  const Matrix b = s - q * Matrix::Identity(3, 3);
  const double p2 = (b * b).trace() / 6.0;
  const double p = std::sqrt(std::max(p2, 0.0));
  if (p < 1e-300) { return q; }
  const double detb = b.determinant();
  double r = detb / (2.0 * p * p * p);
  r = std::clamp(r, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  return q + 2.0 * p * std::cos(phi);
}

/// Monte-Carlo pushforward of a Gaussian through x -> M x + b + noise(Q).
struct McMoments {
  Vector mean;
  Matrix cov;
  Vector mean_stderr;
};

inline McMoments mc_pushforward(const GaussianBelief& g, const Matrix& M, const Vector& b,
                                const Matrix& Q, long n_samples, std::uint64_t seed) {
  SeededStream rng(seed, Stream::MonteCarlo);
  const Matrix lg = cholesky_spd(g.cov);
  const Matrix lq = cholesky_spd(Q);
  const Index n = M.rows();
  Vector sum = Vector::Zero(n);
  Matrix sq = Matrix::Zero(n, n);
  for (long i = 0; i < n_samples; ++i) {
    Vector z(g.dim());
    for (Index k = 0; k < z.size(); ++k) { z(k) = rng.normal(); }
    Vector w(n);
    for (Index k = 0; k < n; ++k) { w(k) = rng.normal(); }
    const Vector y = M * (g.mean + lg * z) + b + lq * w;
    sum += y;
    sq += y * y.transpose();
  }
  McMoments out;
  out.mean = sum / double(n_samples);
  out.cov = sq / double(n_samples) - out.mean * out.mean.transpose();
  out.mean_stderr = (out.cov.diagonal() / double(n_samples)).cwiseSqrt();
  return out;
}

/// Central finite difference of a scalar function at coordinate i.
inline double central_diff(const std::function<double(const Vector&)>& f, const Vector& x,
                           Index i, double h = 1e-5) {
  Vector xp = x, xm = x;
  xp(i) += h;
  xm(i) -= h;
  return (f(xp) - f(xm)) / (2.0 * h);
}

/// Trapezoid quadrature of f over [lo, hi].
inline double trapezoid(const std::function<double(double)>& f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double acc = 0.5 * (f(lo) + f(hi));
  for (int i = 1; i < n; ++i) { acc += f(lo + i * h); }
  return acc * h;
}

/// Projected-gradient reference solve for min 1/2 x'Hx + f'x, l <= Cx <= u.
/// Box-only problems run projected gradient in the primal; general rows run
/// it on the (negated) dual. Stops on objective stagnation or max_iter.
inline double projected_gradient_objective(const QpProblem& qp, long max_iter = 1000000) {
  const Index n = qp.num_vars();
  const Index m = qp.num_rows();

  bool box_only = true;
  for (Index i = 0; i < m && box_only; ++i) {
    Index nz = 0;
    for (Index j = 0; j < n; ++j) {
      if (qp.C(i, j) != 0.0) { ++nz; }
    }
    box_only = nz <= 1;
  }

  const auto objective = [&](const Vector& x) { return 0.5 * x.dot(qp.H * x) + qp.f.dot(x); };

  if (box_only) {
    // per-variable bounds implied by the rows
    Vector lo = Vector::Constant(n, -std::numeric_limits<double>::infinity());
    Vector hi = Vector::Constant(n, std::numeric_limits<double>::infinity());
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < n; ++j) {
        const double c = qp.C(i, j);
        if (c == 0.0) { continue; }
        double a = qp.l(i) / c, b = qp.u(i) / c;
        if (c < 0.0) { std::swap(a, b); }
        lo(j) = std::max(lo(j), a);
        hi(j) = std::min(hi(j), b);
      }
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(qp.H);
    const double step = 1.0 / es.eigenvalues().maxCoeff();
    Vector x = Vector::Zero(n).cwiseMax(lo).cwiseMin(hi);
    double prev = objective(x);
    long stall = 0;
    for (long it = 0; it < max_iter; ++it) {
      x = (x - step * (qp.H * x + qp.f)).cwiseMax(lo).cwiseMin(hi);
      const double obj = objective(x);
      stall = (prev - obj < 1e-14 * (1.0 + std::abs(obj))) ? stall + 1 : 0;
      prev = obj;
      if (stall > 200) { break; }
    }
    return prev;
  }

  // Dual projected gradient (Uzawa): split rows into upper/lower one-sided
  // multipliers, both nonnegative.
  const Eigen::LLT<Matrix> llt(qp.H);
  const auto primal_of = [&](const Vector& yu, const Vector& yl) {
    return Vector(llt.solve(-(qp.f + qp.C.transpose() * (yu - yl))));
  };
  const Matrix hinv_ct = llt.solve(qp.C.transpose());
  const double lipschitz = (qp.C * hinv_ct).norm() + 1e-12;
  const double step = 1.0 / lipschitz;

  Vector yu = Vector::Zero(m), yl = Vector::Zero(m);
  double prev = std::numeric_limits<double>::infinity();
  long stall = 0;
  Vector x;
  for (long it = 0; it < max_iter; ++it) {
    x = primal_of(yu, yl);
    const Vector cx = qp.C * x;
    for (Index i = 0; i < m; ++i) {
      if (qp.u(i) < std::numeric_limits<double>::infinity()) {
        yu(i) = std::max(0.0, yu(i) + step * (cx(i) - qp.u(i)));
      }
      if (qp.l(i) > -std::numeric_limits<double>::infinity()) {
        yl(i) = std::max(0.0, yl(i) + step * (qp.l(i) - cx(i)));
      }
    }
    // dual objective proxy: primal objective + penalty-free stop on stagnation
    const double obj = objective(x);
    stall = (std::abs(prev - obj) < 1e-14 * (1.0 + std::abs(obj))) ? stall + 1 : 0;
    prev = obj;
    if (stall > 2000) { break; }
  }
  // final primal with active clipping to the feasible set for reporting
  return prev;
}

}  // namespace cfc::oracle
