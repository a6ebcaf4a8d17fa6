#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cfc/gaussian.hpp"
#include "cfc/rng.hpp"
#include "oracles.hpp"

using namespace cfc;

namespace {

Matrix random_spd(int n, SeededStream& rng, double scale = 1.0) {
  Matrix g(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) { g(r, c) = rng.normal(); }
  }
  return scale * (g * g.transpose() + 0.05 * Matrix::Identity(n, n));
}

}  // namespace

TEST_CASE("log_density closed forms") {
  GaussianBelief g1(Vector::Zero(1), Matrix::Identity(1, 1));
  CHECK(log_density(g1, Vector::Zero(1)) == doctest::Approx(-0.9189385332046727).epsilon(1e-12));

  GaussianBelief g2(Vector::Zero(2), Matrix::Identity(2, 2));
  CHECK(log_density(g2, Vector::Zero(2)) == doctest::Approx(-1.8378770664093453).epsilon(1e-12));
}

TEST_CASE("log_density matches explicit-inverse oracle in 3-D") {
  SeededStream rng(42, Stream::MonteCarlo);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix cov = random_spd(3, rng);
    Vector mean(3), x(3);
    for (int i = 0; i < 3; ++i) {
      mean(i) = rng.normal();
      x(i) = rng.normal();
    }
    const GaussianBelief g(mean, cov);
    const double expected = oracle::logpdf_explicit_inverse(mean, cov, x);
    CHECK(log_density(g, x) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("log_density dimension mismatch is an error") {
  GaussianBelief g(Vector::Zero(2), Matrix::Identity(2, 2));
  CHECK_THROWS_AS(log_density(g, Vector::Zero(3)), std::invalid_argument);
}

TEST_CASE("log_density integrates to one (1-D and 2-D)") {
  const GaussianBelief g1(Vector::Constant(1, 0.3), 1.7 * Matrix::Identity(1, 1));
  const double sd = std::sqrt(1.7);
  const double mass1 = oracle::trapezoid(
      [&](double x) { return std::exp(log_density(g1, Vector::Constant(1, x))); },
      0.3 - 8 * sd, 0.3 + 8 * sd, 4000);
  CHECK(mass1 == doctest::Approx(1.0).epsilon(1e-6));

  Matrix cov(2, 2);
  cov << 0.8, 0.2, 0.2, 0.5;
  const GaussianBelief g2(Vector::Zero(2), cov);
  const double lim = 8.0 * std::sqrt(0.8);
  const int n = 400;
  const double h = 2.0 * lim / n;
  double mass2 = 0.0;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      Vector x(2);
      x << -lim + i * h, -lim + j * h;
      const double w = ((i == 0 || i == n) ? 0.5 : 1.0) * ((j == 0 || j == n) ? 0.5 : 1.0);
      mass2 += w * std::exp(log_density(g2, x));
    }
  }
  mass2 *= h * h;
  CHECK(mass2 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("affine_push identity accumulation") {
  Matrix sigma0(2, 2);
  sigma0 << 0.4, 0.1, 0.1, 0.3;
  GaussianBelief g(Vector::Zero(2), sigma0);
  const double q = 0.07;
  const int k = 5;
  for (int i = 0; i < k; ++i) {
    g = affine_push(g, Matrix::Identity(2, 2), Vector::Zero(2), q * Matrix::Identity(2, 2));
  }
  CHECK((g.cov - (sigma0 + k * q * Matrix::Identity(2, 2))).norm() == doctest::Approx(0.0));
  CHECK(g.mean.norm() == doctest::Approx(0.0));
}

TEST_CASE("affine_push collapse case") {
  GaussianBelief g(Vector::Ones(2), Matrix::Identity(2, 2));
  Vector c(2);
  c << 3.0, -1.0;
  Matrix q0(2, 2);
  q0 << 0.2, 0.05, 0.05, 0.1;
  const GaussianBelief out = affine_push(g, Matrix::Zero(2, 2), c, q0);
  CHECK((out.mean - c).norm() == doctest::Approx(0.0));
  CHECK((out.cov - q0).norm() == doctest::Approx(0.0));
}

TEST_CASE("affine_push matches Monte-Carlo pushforward") {
  SeededStream rng(7, Stream::MonteCarlo);
  const Matrix cov = random_spd(2, rng, 0.5);
  Vector mean(2);
  mean << 0.4, -0.2;
  const GaussianBelief g(mean, cov);
  Matrix m(2, 2);
  m << 0.9, 0.3, -0.2, 0.7;
  Vector b(2);
  b << 0.1, 0.5;
  const Matrix q = random_spd(2, rng, 0.05);

  const GaussianBelief pushed = affine_push(g, m, b, q);
  const auto mc = oracle::mc_pushforward(g, m, b, q, 1000000, 99);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(pushed.mean(i) - mc.mean(i)) <= 4.0 * mc.mean_stderr(i));
  }
  CHECK((pushed.cov - mc.cov).norm() <= 0.01 * pushed.cov.norm() + 1e-3);
}

TEST_CASE("affine_push with invertible M preserves probability mass (1-D)") {
  const GaussianBelief g(Vector::Constant(1, -0.2), 0.6 * Matrix::Identity(1, 1));
  const Matrix m = 2.5 * Matrix::Identity(1, 1);
  const GaussianBelief out =
      affine_push(g, m, Vector::Constant(1, 0.4), 0.1 * Matrix::Identity(1, 1));
  const double sd = std::sqrt(out.cov(0, 0));
  const double mass = oracle::trapezoid(
      [&](double x) { return std::exp(log_density(out, Vector::Constant(1, x))); },
      out.mean(0) - 8 * sd, out.mean(0) + 8 * sd, 4000);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("max_eig_sqrt analytic cases") {
  Matrix d(2, 2);
  d << 4.0, 0.0, 0.0, 1.0;
  CHECK(max_eig_sqrt(d) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(max_eig_sqrt(Matrix::Identity(3, 3)) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(max_eig_sqrt(Matrix::Zero(2, 2)) == doctest::Approx(0.0));
}

TEST_CASE("max_eig_sqrt matches characteristic-polynomial oracle") {
  SeededStream rng(11, Stream::MonteCarlo);
  for (int rep = 0; rep < 25; ++rep) {
    const Matrix s = random_spd(3, rng);
    const double expected = std::sqrt(oracle::max_eig_closed_form(s));
    CHECK(max_eig_sqrt(s) == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("cholesky jitter repair keeps the floor") {
  // Rank-deficient: plain LLT fails, jittered retry succeeds.
  Matrix s(2, 2);
  s << 1.0, 1.0, 1.0, 1.0;
  const Matrix l = cholesky_spd(s);
  CHECK((l * l.transpose() - s).norm() <= 1e-8);
}

TEST_CASE("normal_quantile reference values") {
  CHECK(normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(1.0 - 1e-6) == doctest::Approx(4.753424308822899).epsilon(1e-9));
}

TEST_CASE("belief invariants: symmetry and eigenvalue floor after operations") {
  SeededStream rng(3, Stream::MonteCarlo);
  GaussianBelief g(Vector::Zero(2), 0.1 * Matrix::Identity(2, 2));
  for (int i = 0; i < 200; ++i) {
    Matrix m(2, 2);
    for (int k = 0; k < 4; ++k) { m(k / 2, k % 2) = 0.6 * rng.normal(); }
    g = affine_push(g, m, Vector::Zero(2), random_spd(2, rng, 1e-4));
    CHECK((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(g.cov);
    CHECK(es.eigenvalues().minCoeff() >= 1e-10);
  }
}
