#include "cfc/model.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cfc/rng.hpp"

namespace cfc {

namespace {

Matrix chol2_mul(const Matrix& l) {
  return l * l.transpose() + kNoiseFloor * Matrix::Identity(l.rows(), l.rows());
}

/// dL/dSigma (symmetric, all entries independent) -> dL/d(log-Cholesky coords).
Vector logchol_grad(const Matrix& g_sigma, const Matrix& l) {
  const Matrix gl = 2.0 * g_sigma * l;  // gradient w.r.t. the dense lower factor
  Vector out(3);
  out(0) = gl(0, 0) * l(0, 0);  // chain through l00 = exp(coord)
  out(1) = gl(1, 0);
  out(2) = gl(1, 1) * l(1, 1);
  return out;
}

struct InnovationStats {
  Vector e;       // o - yhat
  Vector s;       // S^{-1} e
  Matrix s_inv;   // S^{-1}
  double loglik;  // log N(o; yhat, S)
};

InnovationStats innovation_stats(const Vector& o, const Vector& yhat, const Matrix& s_cov) {
  InnovationStats st;
  st.e = o - yhat;
  const Matrix l = cholesky_spd(s_cov);
  const Matrix l_inv =
      l.triangularView<Eigen::Lower>().solve(Matrix::Identity(l.rows(), l.rows()));
  st.s_inv = l_inv.transpose() * l_inv;
  st.s = st.s_inv * st.e;
  double logdet = 0.0;
  for (Index i = 0; i < l.rows(); ++i) { logdet += std::log(l(i, i)); }
  logdet *= 2.0;
  st.loglik = -0.5 * st.e.dot(st.s) -
              0.5 * (double(o.size()) * std::log(2.0 * M_PI) + logdet);
  return st;
}

}  // namespace

Matrix LinearGaussianParams::sigma_w() const {
  return chol2_mul(chol_from_logchol(lw));
}

Matrix LinearGaussianParams::sigma_v() const {
  return chol2_mul(chol_from_logchol(lv));
}

Vector LinearGaussianParams::logchol_from_cov(const Matrix& sigma) {
  require_shape(sigma, 2, 2, "logchol_from_cov: sigma");
  Matrix body = sigma - kNoiseFloor * Matrix::Identity(2, 2);
  Eigen::LLT<Matrix> llt(body);
  if (llt.info() != Eigen::Success) { llt.compute(sigma); }
  if (llt.info() != Eigen::Success) {
    throw SingularCovariance("logchol_from_cov: covariance not SPD");
  }
  const Matrix l = llt.matrixL();
  Vector out(3);
  out(0) = std::log(l(0, 0));
  out(1) = l(1, 0);
  out(2) = std::log(l(1, 1));
  return out;
}

Matrix LinearGaussianParams::chol_from_logchol(const Vector& l) {
  require_dim(l, 3, "chol_from_logchol: l");
  Matrix out = Matrix::Zero(2, 2);
  out(0, 0) = std::exp(l(0));
  out(1, 0) = l(1);
  out(1, 1) = std::exp(l(2));
  return out;
}

int ModelVariant::param_count() const {
  return kind_ == ModelKind::Linear ? LinearGaussianParams::kParamCount : mlp_.param_count();
}

Vector ModelVariant::flatten() const {
  Vector theta(param_count());
  if (kind_ == ModelKind::Linear) {
    theta << lin_.A(0, 0), lin_.A(0, 1), lin_.A(1, 0), lin_.A(1, 1), lin_.B(0, 0), lin_.B(1, 0),
        lin_.C(0, 0), lin_.C(0, 1), lin_.C(1, 0), lin_.C(1, 1), lin_.lw(0), lin_.lw(1),
        lin_.lw(2), lin_.lv(0), lin_.lv(1), lin_.lv(2);
  } else {
    mlp_.transition.flatten(theta.data());
    mlp_.observation.flatten(theta.data() + mlp_.transition.param_count());
  }
  return theta;
}

void ModelVariant::set_params(const Vector& theta) {
  require_dim(theta, param_count(), "set_params: theta");
  if (kind_ == ModelKind::Linear) {
    lin_.A << theta(0), theta(1), theta(2), theta(3);
    lin_.B << theta(4), theta(5);
    lin_.C << theta(6), theta(7), theta(8), theta(9);
    lin_.lw << theta(10), theta(11), theta(12);
    lin_.lv << theta(13), theta(14), theta(15);
  } else {
    mlp_.transition.unflatten(theta.data());
    mlp_.observation.unflatten(theta.data() + mlp_.transition.param_count());
  }
}

std::pair<int, int> ModelVariant::phi_range() const {
  if (kind_ == ModelKind::Linear) {
    return {LinearGaussianParams::kPhiBegin, LinearGaussianParams::kPhiEnd};
  }
  return {mlp_.phi_begin(), mlp_.phi_end()};
}

Vector ModelVariant::phi() const {
  const auto [lo, hi] = phi_range();
  return flatten().segment(lo, hi - lo);
}

GaussianBelief ModelVariant::predict_latent(const GaussianBelief& belief, double u) const {
  require(belief.dim() == 2, "predict_latent: belief must be 2-dimensional");
  if (kind_ == ModelKind::Linear) {
    return affine_push(belief, lin_.A, lin_.B * u, lin_.sigma_w());
  }
  Vector in(3);
  in << belief.mean(0), belief.mean(1), u;
  const MlpForward f = mlp_forward(mlp_.transition, in);
  const Matrix jz = mlp_mean_jacobian(mlp_.transition, f).leftCols(2);
  Matrix cov = jz * belief.cov * jz.transpose();
  cov += Matrix(f.variance.asDiagonal());
  return GaussianBelief(f.mean, cov);
}

GaussianBelief ModelVariant::predict_observation(const GaussianBelief& latent) const {
  require(latent.dim() == 2, "predict_observation: latent must be 2-dimensional");
  if (kind_ == ModelKind::Linear) {
    return affine_push(latent, lin_.C, Vector::Zero(2), lin_.sigma_v());
  }
  const MlpForward f = mlp_forward(mlp_.observation, latent.mean);
  const Matrix j = mlp_mean_jacobian(mlp_.observation, f);
  Matrix cov = j * latent.cov * j.transpose();
  cov += Matrix(f.variance.asDiagonal());
  return GaussianBelief(f.mean, cov);
}

GaussianBelief ModelVariant::decode_physical(const GaussianBelief& latent) const {
  // Identity decoder with a fixed noise floor.
  return GaussianBelief(latent.mean,
                        latent.cov + 1e-8 * Matrix::Identity(latent.dim(), latent.dim()));
}

double ModelVariant::loglik(const GaussianBelief& belief, double u, const Vector& o_next) const {
  const GaussianBelief pred = predict_observation(predict_latent(belief, u));
  return log_density(pred, o_next);
}

std::pair<double, Vector> ModelVariant::loglik_and_grad(const GaussianBelief& belief, double u,
                                                        const Vector& o_next) const {
  require_dim(o_next, 2, "loglik_and_grad: o_next");
  require(o_next.allFinite(), "loglik_and_grad: o_next must be finite");

  if (kind_ == ModelKind::Linear) {
    const Matrix& a = lin_.A;
    const Matrix& c = lin_.C;
    const Matrix lw_chol = LinearGaussianParams::chol_from_logchol(lin_.lw);
    const Matrix lv_chol = LinearGaussianParams::chol_from_logchol(lin_.lv);
    const Matrix sw = chol2_mul(lw_chol);
    const Matrix sv = chol2_mul(lv_chol);

    const Vector m_pred = a * belief.mean + lin_.B * u;
    const Matrix p_pred = a * belief.cov * a.transpose() + sw;
    const Vector yhat = c * m_pred;
    const Matrix s_cov = c * p_pred * c.transpose() + sv;

    const InnovationStats st = innovation_stats(o_next, yhat, s_cov);
    const Matrix g = 0.5 * (st.s * st.s.transpose() - st.s_inv);  // dL/dS

    const Vector ct_s = c.transpose() * st.s;
    const Matrix g_ppred = c.transpose() * g * c;  // dL/dSigma_pred

    const Matrix d_a = ct_s * belief.mean.transpose() + 2.0 * g_ppred * a * belief.cov;
    const Vector d_b = ct_s * u;
    const Matrix d_c = st.s * m_pred.transpose() + 2.0 * g * c * p_pred;
    const Vector d_lw = logchol_grad(g_ppred, lw_chol);
    const Vector d_lv = logchol_grad(g, lv_chol);

    Vector grad(LinearGaussianParams::kParamCount);
    grad << d_a(0, 0), d_a(0, 1), d_a(1, 0), d_a(1, 1), d_b(0), d_b(1), d_c(0, 0), d_c(0, 1),
        d_c(1, 0), d_c(1, 1), d_lw(0), d_lw(1), d_lw(2), d_lv(0), d_lv(1), d_lv(2);
    return {st.loglik, grad};
  }

  // Deep variant: EKF-linearized predictive through both nets. The reverse
  // pass differentiates the full expression, including the covariance path
  // through the mean-head Jacobians (ReLU masks locally constant).
  Vector in(3);
  in << belief.mean(0), belief.mean(1), u;
  const MlpForward ft = mlp_forward(mlp_.transition, in);
  const Matrix jf = mlp_mean_jacobian(mlp_.transition, ft).leftCols(2);
  Matrix sigma_z = jf * belief.cov * jf.transpose();
  sigma_z += Matrix(ft.variance.asDiagonal());

  const MlpForward fo = mlp_forward(mlp_.observation, ft.mean);
  const Matrix jo = mlp_mean_jacobian(mlp_.observation, fo);
  Matrix s_cov = jo * sigma_z * jo.transpose();
  s_cov += Matrix(fo.variance.asDiagonal());

  const InnovationStats st = innovation_stats(o_next, fo.mean, s_cov);
  const Matrix g = 0.5 * (st.s * st.s.transpose() - st.s_inv);

  MlpGrad grad_t(mlp_.transition);
  MlpGrad grad_o(mlp_.observation);

  // Observation net: mean head, variance head, and Jacobian path.
  Vector gv_o(2);
  gv_o << g(0, 0) * fo.variance(0), g(1, 1) * fo.variance(1);
  Vector d_mz = Vector::Zero(2);
  mlp_backward(mlp_.observation, fo, st.s, gv_o, grad_o, &d_mz);
  mlp_jacobian_backward(mlp_.observation, fo, 2.0 * g * jo * sigma_z, -1, grad_o);

  // Transition net: latent-mean input feeds the observation net.
  const Matrix g_z = jo.transpose() * g * jo;  // dL/dSigma_z
  Vector gv_f(2);
  gv_f << g_z(0, 0) * ft.variance(0), g_z(1, 1) * ft.variance(1);
  mlp_backward(mlp_.transition, ft, d_mz, gv_f, grad_t, nullptr);
  mlp_jacobian_backward(mlp_.transition, ft, 2.0 * g_z * jf * belief.cov, 2, grad_t);

  Vector grad(param_count());
  grad_t.flatten(grad.data());
  grad_o.flatten(grad.data() + mlp_.transition.param_count());
  return {st.loglik, grad};
}

std::pair<double, Vector> ModelVariant::loglik_and_grad_mean_path(const GaussianBelief& belief,
                                                                  double u,
                                                                  const Vector& o_next) const {
  require_dim(o_next, 2, "loglik_and_grad_mean_path: o_next");
  require(o_next.allFinite(), "loglik_and_grad_mean_path: o_next must be finite");

  if (kind_ == ModelKind::Linear) {
    const Matrix& a = lin_.A;
    const Matrix& c = lin_.C;
    const Vector m_pred = a * belief.mean + lin_.B * u;
    const Matrix p_pred = a * belief.cov * a.transpose() + lin_.sigma_w();
    const Vector yhat = c * m_pred;
    const Matrix s_cov = c * p_pred * c.transpose() + lin_.sigma_v();
    const InnovationStats st = innovation_stats(o_next, yhat, s_cov);

    const Vector ct_s = c.transpose() * st.s;
    const Matrix d_a = ct_s * belief.mean.transpose();
    const Vector d_b = ct_s * u;
    const Matrix d_c = st.s * m_pred.transpose();

    Vector grad = Vector::Zero(LinearGaussianParams::kParamCount);
    grad.head(10) << d_a(0, 0), d_a(0, 1), d_a(1, 0), d_a(1, 1), d_b(0), d_b(1), d_c(0, 0),
        d_c(0, 1), d_c(1, 0), d_c(1, 1);
    return {st.loglik, grad};
  }

  Vector in(3);
  in << belief.mean(0), belief.mean(1), u;
  const MlpForward ft = mlp_forward(mlp_.transition, in);
  const Matrix jf = mlp_mean_jacobian(mlp_.transition, ft).leftCols(2);
  Matrix sigma_z = jf * belief.cov * jf.transpose();
  sigma_z += Matrix(ft.variance.asDiagonal());
  const MlpForward fo = mlp_forward(mlp_.observation, ft.mean);
  const Matrix jo = mlp_mean_jacobian(mlp_.observation, fo);
  Matrix s_cov = jo * sigma_z * jo.transpose();
  s_cov += Matrix(fo.variance.asDiagonal());
  const InnovationStats st = innovation_stats(o_next, fo.mean, s_cov);

  MlpGrad grad_t(mlp_.transition);
  MlpGrad grad_o(mlp_.observation);
  Vector d_mz = Vector::Zero(2);
  mlp_backward(mlp_.observation, fo, st.s, Vector::Zero(2), grad_o, &d_mz);
  mlp_backward(mlp_.transition, ft, d_mz, Vector::Zero(2), grad_t, nullptr);

  Vector grad(param_count());
  grad_t.flatten(grad.data());
  grad_o.flatten(grad.data() + mlp_.transition.param_count());
  return {st.loglik, grad};
}

LinearizedDynamics ModelVariant::linearize_dynamics(const Vector& z, double u) const {
  LinearizedDynamics out;
  if (kind_ == ModelKind::Linear) {
    out.A = lin_.A;
    out.B = lin_.B;
    out.d = Vector::Zero(2);
    out.Q = lin_.sigma_w();
    return out;
  }
  Vector in(3);
  in << z(0), z(1), u;
  const MlpForward f = mlp_forward(mlp_.transition, in);
  const Matrix j = mlp_mean_jacobian(mlp_.transition, f);
  out.A = j.leftCols(2);
  out.B = j.col(2);
  out.d = f.mean - out.A * z - out.B * u;
  out.Q = Matrix(f.variance.asDiagonal());
  return out;
}

LinearizedObservation ModelVariant::linearize_observation(const Vector& z) const {
  LinearizedObservation out;
  if (kind_ == ModelKind::Linear) {
    out.C = lin_.C;
    out.y0 = lin_.C * z;
    out.R = lin_.sigma_v();
    return out;
  }
  const MlpForward f = mlp_forward(mlp_.observation, z);
  out.C = mlp_mean_jacobian(mlp_.observation, f);
  out.y0 = f.mean;
  out.R = Matrix(f.variance.asDiagonal());
  return out;
}

void ModelVariant::save(std::ostream& os) const {
  const Vector theta = flatten();
  const char* name = (kind_ == ModelKind::Linear) ? "linear" : "mlp";
  for (Index i = 0; i < theta.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", theta(i));
    os << name << " " << i << " " << buf << "\n";
  }
}

ModelVariant ModelVariant::load(std::istream& is) {
  std::string name;
  long idx = 0;
  double value = 0.0;
  std::vector<double> values;
  std::string first_name;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) { continue; }
    std::istringstream ls(line);
    if (!(ls >> name >> idx >> value)) {
      throw ConfigError("model load: malformed line '" + line + "'");
    }
    if (first_name.empty()) { first_name = name; }
    if (idx != long(values.size())) {
      throw ConfigError("model load: indices must be contiguous from 0");
    }
    values.push_back(value);
  }
  ModelVariant model;
  if (first_name == "linear") {
    model = ModelVariant(LinearGaussianParams{});
  } else if (first_name == "mlp") {
    model = ModelVariant(MlpParams{});
  } else {
    throw ConfigError("model load: unknown variant '" + first_name + "'");
  }
  if (long(values.size()) != model.param_count()) {
    throw ConfigError("model load: expected " + std::to_string(model.param_count()) +
                      " values, got " + std::to_string(values.size()));
  }
  Vector theta = Eigen::Map<const Vector>(values.data(), long(values.size()));
  model.set_params(theta);
  return model;
}

ModelVariant make_linear_initial(double sigma_w, double sigma_v) {
  LinearGaussianParams p;
  p.A = 0.9 * Matrix::Identity(2, 2);
  p.B << 0.05, 0.10;
  p.C = Matrix::Identity(2, 2);
  p.lw = LinearGaussianParams::logchol_from_cov(sigma_w * sigma_w * Matrix::Identity(2, 2));
  p.lv = LinearGaussianParams::logchol_from_cov(sigma_v * sigma_v * Matrix::Identity(2, 2));
  return ModelVariant(p);
}

ModelVariant make_mlp_initial(double sigma_w, double sigma_v, std::uint64_t seed) {
  MlpParams p;
  SeededStream rng(seed, Stream::InitJitter);
  auto fill = [&rng](Matrix& m, double scale) {
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) { m(r, c) = scale * rng.normal(); }
    }
  };
  auto init_net = [&](MlpNet& net, double logvar_bias) {
    fill(net.w1, 1.0 / std::sqrt(double(net.w1.cols())));
    fill(net.w2, 1.0 / std::sqrt(double(net.w2.cols())));
    fill(net.wm, 0.05 / std::sqrt(double(net.wm.cols())));
    fill(net.wv, 0.01 / std::sqrt(double(net.wv.cols())));
    for (Index i = 0; i < net.b1.size(); ++i) { net.b1(i) = 0.1 * rng.normal(); }
    net.bv.setConstant(logvar_bias);
  };
  init_net(p.transition, 2.0 * std::log(sigma_w));
  init_net(p.observation, 2.0 * std::log(sigma_v));
  return ModelVariant(p);
}

}  // namespace cfc
