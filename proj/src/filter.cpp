#include "cfc/filter.hpp"

#include <cmath>

namespace cfc {

FilterState init_belief(const FilterInit& init) {
  require(init.cov.rows() == init.cov.cols(), "init_belief: P0 must be square");
  require(init.mean.size() == init.cov.rows(), "init_belief: mean/P0 dimension mismatch");
  Eigen::LLT<Matrix> llt(symmetrize(init.cov));
  if (llt.info() != Eigen::Success) {
    throw ConfigError("init_belief: initial covariance is not positive definite");
  }
  FilterState f;
  f.belief = GaussianBelief(init.mean, init.cov);
  f.last_innovation = Vector::Zero(init.mean.size());
  return f;
}

FilterState filter_update(const ModelVariant& m, const FilterState& f, double u,
                          const Vector& o_next) {
  require(o_next.allFinite(), "filter_update: observation must be finite");

  const GaussianBelief pred = m.predict_latent(f.belief, u);
  const LinearizedObservation obs = m.linearize_observation(pred.mean);

  const Matrix& c = obs.C;
  const Matrix s = symmetrize(c * pred.cov * c.transpose() + obs.R);
  const Matrix l = cholesky_spd(s);
  // K = P C^T S^{-1} via two triangular solves
  const Matrix pct = pred.cov * c.transpose();
  const Matrix k = l.transpose()
                       .triangularView<Eigen::Upper>()
                       .solve(l.triangularView<Eigen::Lower>().solve(pct.transpose()))
                       .transpose();

  const Vector innovation = o_next - obs.y0;
  const Index n = pred.dim();
  const Matrix ikc = Matrix::Identity(n, n) - k * c;

  FilterState out;
  out.belief =
      GaussianBelief(pred.mean + k * innovation,
                     ikc * pred.cov * ikc.transpose() + k * obs.R * k.transpose());
  out.last_innovation = innovation;
  out.last_surprise_raw = f.last_surprise_raw;
  return out;
}

Surprise surprise(const ModelVariant& m, const FilterState& f, double u, const Vector& o_next) {
  require(o_next.allFinite(), "surprise: observation must be finite");
  const GaussianBelief pred = m.predict_observation(m.predict_latent(f.belief, u));

  Surprise s;
  s.raw = -log_density(pred, o_next);
  // raw minus its zero-innovation floor 0.5 log det(2 pi S)
  const Matrix l = cholesky_spd(pred.cov);
  const Vector y = l.triangularView<Eigen::Lower>().solve(o_next - pred.mean);
  s.shifted = std::max(0.0, 0.5 * y.squaredNorm());
  return s;
}

}  // namespace cfc
