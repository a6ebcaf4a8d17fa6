#include "cfc/mlp.hpp"

#include <cmath>
#include <vector>

#include "cfc/rng.hpp"

namespace cfc {

namespace {

Vector relu(const Vector& a) {
  return a.cwiseMax(0.0);
}

Vector relu_mask(const Vector& a) {
  return (a.array() > 0.0).cast<double>().matrix();
}

}  // namespace

MlpNet::MlpNet(int in_dim, int out_dim) {
  w1 = Matrix::Zero(kHidden, in_dim);
  b1 = Vector::Zero(kHidden);
  w2 = Matrix::Zero(kHidden, kHidden);
  b2 = Vector::Zero(kHidden);
  wm = Matrix::Zero(out_dim, kHidden);
  bm = Vector::Zero(out_dim);
  wv = Matrix::Zero(out_dim, kHidden);
  bv = Vector::Zero(out_dim);
}

int MlpNet::param_count() const {
  return int(w1.size() + b1.size() + w2.size() + b2.size() + wm.size() + bm.size() + wv.size() +
             bv.size());
}

namespace {

template <typename MatLike>
double* write_block(const MatLike& m, double* dst) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) { *dst++ = m(r, c); }
  }
  return dst;
}

template <typename MatLike>
const double* read_block(MatLike& m, const double* src) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) { m(r, c) = *src++; }
  }
  return src;
}

}  // namespace

void MlpNet::flatten(double* dst) const {
  dst = write_block(w1, dst);
  dst = write_block(b1, dst);
  dst = write_block(w2, dst);
  dst = write_block(b2, dst);
  dst = write_block(wm, dst);
  dst = write_block(bm, dst);
  dst = write_block(wv, dst);
  write_block(bv, dst);
}

void MlpNet::unflatten(const double* src) {
  src = read_block(w1, src);
  src = read_block(b1, src);
  src = read_block(w2, src);
  src = read_block(b2, src);
  src = read_block(wm, src);
  src = read_block(bm, src);
  src = read_block(wv, src);
  read_block(bv, src);
}

MlpForward mlp_forward(const MlpNet& net, const Vector& input) {
  require_dim(input, net.w1.cols(), "mlp_forward: input");
  MlpForward f;
  f.input = input;
  f.a1 = net.w1 * input + net.b1;
  f.h1 = relu(f.a1);
  f.a2 = net.w2 * f.h1 + net.b2;
  f.h2 = relu(f.a2);
  f.mean = net.wm * f.h2 + net.bm;
  f.logvar_raw = net.wv * f.h2 + net.bv;
  f.logvar = f.logvar_raw.cwiseMax(MlpNet::kLogVarLo).cwiseMin(MlpNet::kLogVarHi);
  f.variance = f.logvar.array().exp().matrix();
  return f;
}

Matrix mlp_mean_jacobian(const MlpNet& net, const MlpForward& f) {
  const Vector d1 = relu_mask(f.a1);
  const Vector d2 = relu_mask(f.a2);
  // wm * D2 * w2 * D1 * w1
  return net.wm * d2.asDiagonal() * net.w2 * d1.asDiagonal() * net.w1;
}

MlpGrad::MlpGrad(const MlpNet& net)
    : w1(Matrix::Zero(net.w1.rows(), net.w1.cols())),
      w2(Matrix::Zero(net.w2.rows(), net.w2.cols())),
      wm(Matrix::Zero(net.wm.rows(), net.wm.cols())),
      wv(Matrix::Zero(net.wv.rows(), net.wv.cols())),
      b1(Vector::Zero(net.b1.size())),
      b2(Vector::Zero(net.b2.size())),
      bm(Vector::Zero(net.bm.size())),
      bv(Vector::Zero(net.bv.size())) {}

void MlpGrad::flatten(double* dst) const {
  dst = write_block(w1, dst);
  dst = write_block(b1, dst);
  dst = write_block(w2, dst);
  dst = write_block(b2, dst);
  dst = write_block(wm, dst);
  dst = write_block(bm, dst);
  dst = write_block(wv, dst);
  write_block(bv, dst);
}

void mlp_backward(const MlpNet& net, const MlpForward& f, const Vector& gm, const Vector& gv,
                  MlpGrad& grad, Vector* input_grad) {
  // Clamp: zero derivative outside the open interval.
  Vector gv_eff = gv;
  for (Index i = 0; i < gv.size(); ++i) {
    if (f.logvar_raw(i) <= MlpNet::kLogVarLo || f.logvar_raw(i) >= MlpNet::kLogVarHi) {
      gv_eff(i) = 0.0;
    }
  }

  grad.wm += gm * f.h2.transpose();
  grad.bm += gm;
  grad.wv += gv_eff * f.h2.transpose();
  grad.bv += gv_eff;

  const Vector dh2 = net.wm.transpose() * gm + net.wv.transpose() * gv_eff;
  const Vector da2 = relu_mask(f.a2).cwiseProduct(dh2);
  grad.w2 += da2 * f.h1.transpose();
  grad.b2 += da2;

  const Vector dh1 = net.w2.transpose() * da2;
  const Vector da1 = relu_mask(f.a1).cwiseProduct(dh1);
  grad.w1 += da1 * f.input.transpose();
  grad.b1 += da1;

  if (input_grad != nullptr) { *input_grad += net.w1.transpose() * da1; }
}

void mlp_jacobian_backward(const MlpNet& net, const MlpForward& f, const Matrix& p, int cols,
                           MlpGrad& grad) {
  const Vector d1 = relu_mask(f.a1);
  const Vector d2 = relu_mask(f.a2);
  const Matrix w1c = (cols >= 0) ? Matrix(net.w1.leftCols(cols)) : net.w1;
  Matrix pc = p;  // p has shape (out, cols-or-in)

  // J = wm D2 w2 D1 w1c. For f = tr(p^T J):
  //   d/dwm = p (D2 w2 D1 w1c)^T
  //   d/dw2 = D2 wm^T p w1c^T D1
  //   d/dw1c = D1 w2^T D2 wm^T p
  const Matrix mid = d2.asDiagonal() * net.w2 * d1.asDiagonal();  // (h,h)
  grad.wm += pc * (mid * w1c).transpose();
  grad.w2 += d2.asDiagonal() * net.wm.transpose() * pc * w1c.transpose() * d1.asDiagonal();
  const Matrix gw1c = d1.asDiagonal() * net.w2.transpose() * d2.asDiagonal() *
                      net.wm.transpose() * pc;
  if (cols >= 0) {
    grad.w1.leftCols(cols) += gw1c;
  } else {
    grad.w1 += gw1c;
  }
}

double mlp_grad_check(const MlpNet& net, std::uint64_t seed, int n_coords) {
  SeededStream rng(seed, Stream::MonteCarlo);
  const int in = net.in_dim();
  const int out = net.out_dim();
  const int np = net.param_count();

  // Probe input away from ReLU kinks.
  Vector input(in);
  MlpForward f;
  for (int attempt = 0; attempt < 200; ++attempt) {
    for (int i = 0; i < in; ++i) { input(i) = rng.normal(); }
    f = mlp_forward(net, input);
    const double a1min = f.a1.cwiseAbs().minCoeff();
    const double a2min = f.a2.cwiseAbs().minCoeff();
    if (std::min(a1min, a2min) > 1e-4) { break; }
  }

  // Scalar probe psi = u^T mean + v^T logvar with fixed random u, v.
  Vector u(out), v(out);
  for (int i = 0; i < out; ++i) {
    u(i) = rng.normal();
    v(i) = rng.normal();
  }

  MlpGrad grad(net);
  mlp_backward(net, f, u, v, grad);
  std::vector<double> analytic(np);
  grad.flatten(analytic.data());

  std::vector<double> theta(np);
  net.flatten(theta.data());
  MlpNet probe = net;

  const double h = 1e-5;
  double max_rel = 0.0;
  for (int k = 0; k < n_coords; ++k) {
    const int idx = int(rng.raw() % std::uint64_t(np));
    const double keep = theta[idx];

    theta[idx] = keep + h;
    probe.unflatten(theta.data());
    const MlpForward fp = mlp_forward(probe, input);
    const double psi_p = u.dot(fp.mean) + v.dot(fp.logvar);

    theta[idx] = keep - h;
    probe.unflatten(theta.data());
    const MlpForward fm = mlp_forward(probe, input);
    const double psi_m = u.dot(fm.mean) + v.dot(fm.logvar);

    theta[idx] = keep;
    const double fd = (psi_p - psi_m) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic[idx]), 1e-4});
    max_rel = std::max(max_rel, std::abs(fd - analytic[idx]) / denom);
  }
  probe.unflatten(theta.data());
  return max_rel;
}

}  // namespace cfc
