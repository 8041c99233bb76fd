#include "deepgp/kernels.hpp"

#include <cmath>
#include <string>

#include "deepgp/errors.hpp"

namespace deepgp {

namespace {

void check_dims(const KernelParams& p, Index dims) {
  if (p.log_lengthscales.size() != 1 && p.log_lengthscales.size() != dims) {
    throw DimensionMismatch("kernel has " + std::to_string(p.log_lengthscales.size()) +
                            " lengthscales for " + std::to_string(dims) + "-dimensional input");
  }
}

bool same_matrix(const MatrixXd& a, const MatrixXd& b) {
  return &a == &b || (a.data() == b.data() && a.rows() == b.rows() && a.cols() == b.cols());
}

// Squared scaled distances via the Gram expansion, clamped at zero.
MatrixXd scaled_sqdist(const MatrixXd& a, const MatrixXd& b, bool same) {
  MatrixXd d2 = -2.0 * a * b.transpose();
  d2.colwise() += a.rowwise().squaredNorm();
  d2.rowwise() += b.rowwise().squaredNorm().transpose();
  d2 = d2.cwiseMax(0.0);
  if (same) d2.diagonal().setZero();
  return d2;
}

}  // namespace

KernelParams KernelParams::isotropic(double variance, double lengthscale) {
  KernelParams p;
  p.log_variance = std::log(variance);
  p.log_lengthscales = VectorXd::Constant(1, std::log(lengthscale));
  return p;
}

KernelParams KernelParams::ard(double variance, const VectorXd& lengthscales) {
  KernelParams p;
  p.log_variance = std::log(variance);
  p.log_lengthscales = lengthscales.array().log().matrix();
  return p;
}

double KernelParams::variance() const { return std::exp(log_variance); }

VectorXd KernelParams::lengthscales(Index dims) const {
  check_dims(*this, dims);
  if (log_lengthscales.size() == 1) {
    return VectorXd::Constant(dims, std::exp(log_lengthscales(0)));
  }
  return log_lengthscales.array().exp().matrix();
}

VectorXd KernelParams::to_vector() const {
  VectorXd v(num_params());
  v(0) = log_variance;
  v.tail(log_lengthscales.size()) = log_lengthscales;
  return v;
}

KernelParams KernelParams::from_vector(const VectorXd& v) {
  KernelParams p;
  p.log_variance = v(0);
  p.log_lengthscales = v.tail(v.size() - 1);
  return p;
}

MatrixXd kernel_matrix(const KernelParams& p, const MatrixXd& xa, const MatrixXd& xb) {
  if (xa.cols() != xb.cols()) {
    throw DimensionMismatch("kernel inputs have " + std::to_string(xa.cols()) + " and " +
                            std::to_string(xb.cols()) + " columns");
  }
  const VectorXd inv_ls = p.lengthscales(xa.cols()).cwiseInverse();
  const MatrixXd a = xa * inv_ls.asDiagonal();
  const MatrixXd b = xb * inv_ls.asDiagonal();
  const MatrixXd d2 = scaled_sqdist(a, b, same_matrix(xa, xb));
  return p.variance() * (-0.5 * d2.array()).exp().matrix();
}

VectorXd kernel_diag(const KernelParams& p, const MatrixXd& xa) {
  check_dims(p, xa.cols());
  return VectorXd::Constant(xa.rows(), p.variance());
}

KernelGrads kernel_grads(const KernelParams& p, const MatrixXd& xa, const MatrixXd& xb) {
  KernelGrads g;
  g.d_log_variance = kernel_matrix(p, xa, xb);
  const Index dims = xa.cols();
  const VectorXd ls = p.lengthscales(dims);
  const bool same = same_matrix(xa, xb);

  auto sqdist_along = [&](Index d) {
    MatrixXd s(xa.rows(), xb.rows());
    for (Index j = 0; j < xb.rows(); ++j) {
      s.col(j) = ((xa.col(d).array() - xb(j, d)) / ls(d)).square().matrix();
    }
    if (same) s.diagonal().setZero();
    return s;
  };

  if (p.is_ard()) {
    for (Index d = 0; d < dims; ++d) {
      g.d_log_lengthscales.push_back(g.d_log_variance.cwiseProduct(sqdist_along(d)));
    }
  } else {
    MatrixXd total = MatrixXd::Zero(xa.rows(), xb.rows());
    for (Index d = 0; d < dims; ++d) total += sqdist_along(d);
    g.d_log_lengthscales.push_back(g.d_log_variance.cwiseProduct(total));
  }
  return g;
}

KernelAdjoint kernel_backward(const KernelParams& p, const MatrixXd& xa, const MatrixXd& xb,
                              const MatrixXd& k, const MatrixXd& dk, bool input_grads) {
  if (k.rows() != xa.rows() || k.cols() != xb.rows() || dk.rows() != k.rows() ||
      dk.cols() != k.cols()) {
    throw DimensionMismatch("kernel_backward: adjoint shape does not match the kernel matrix");
  }
  const Index dims = xa.cols();
  const VectorXd ls = p.lengthscales(dims);
  const VectorXd inv_ls = ls.cwiseInverse();
  const MatrixXd a = xa * inv_ls.asDiagonal();
  const MatrixXd b = xb * inv_ls.asDiagonal();

  // H = dK (.) K carries every term: dK/dlogvar = K and
  // dK/dlogls_d = K (.) (a_d - b_d)^2.
  const MatrixXd h = dk.cwiseProduct(k);
  const VectorXd row_sum = h.rowwise().sum();
  const VectorXd col_sum = h.colwise().sum().transpose();
  const MatrixXd hb = h * b;

  KernelAdjoint out;
  out.d_log_variance = h.sum();

  // sum_ij H_ij (a_id - b_jd)^2 per dimension d.
  const VectorXd per_dim = (a.array().square().colwise() * row_sum.array()).colwise().sum().transpose() +
                           (b.array().square().colwise() * col_sum.array()).colwise().sum().transpose() -
                           2.0 * a.cwiseProduct(hb).colwise().sum().transpose().array();
  if (p.is_ard()) {
    out.d_log_lengthscales = per_dim;
  } else {
    out.d_log_lengthscales = VectorXd::Constant(1, per_dim.sum());
  }

  if (input_grads) {
    // dK_ij/dxa_id = -K_ij (a_id - b_jd) / ls_d, and the negation for xb.
    out.d_xa = -((a.array().colwise() * row_sum.array()).matrix() - hb) * inv_ls.asDiagonal();
    const MatrixXd hta = h.transpose() * a;
    out.d_xb = (hta - (b.array().colwise() * col_sum.array()).matrix()) * inv_ls.asDiagonal();
  }
  return out;
}

}  // namespace deepgp
