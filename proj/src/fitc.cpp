#include "deepgp/fitc.hpp"

#include <algorithm>
#include <cmath>

#include "deepgp/errors.hpp"
#include "deepgp/exact_gp.hpp"
#include "deepgp/inducing.hpp"

namespace deepgp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

struct FitcGp::Factors {
  MatrixXd kuu;  // without jitter
  linalg::CholFactor luu;
  MatrixXd kuf;  // m x n
  VectorXd correction;  // diag(K_ff - Q_ff), unclamped
  Eigen::ArrayXd mask;  // 1 where the correction was kept, 0 where clamped
  linalg::LowRankDiag lrd;
};

FitcGp::FitcGp(KernelParams kernel, double log_noise, MatrixXd inducing, MatrixXd x, VectorXd y)
    : kernel_(std::move(kernel)),
      log_noise_(log_noise),
      z_(std::move(inducing)),
      x_(std::move(x)),
      y_(std::move(y)) {
  if (x_.rows() < 1) throw TooFewPoints("FITC needs at least one training point");
  if (y_.size() != x_.rows()) throw LengthMismatch("FITC inputs and targets differ in length");
  if (z_.cols() != x_.cols()) throw DimensionMismatch("inducing locations and inputs differ in width");
  if (z_.rows() < 1 || z_.rows() > x_.rows()) {
    throw TooFewPoints("FITC needs 1 <= m <= n inducing points");
  }
}

double FitcGp::noise_variance() const { return std::exp(log_noise_); }

FitcGp::Factors FitcGp::factorize() const {
  MatrixXd kuu = kernel_matrix(kernel_, z_, z_);
  linalg::CholFactor luu = linalg::cholesky(kuu, linalg::default_jitter(kuu));
  MatrixXd kuf = kernel_matrix(kernel_, z_, x_);
  MatrixXd v = linalg::lower_solve(luu, kuf);
  VectorXd correction =
      kernel_diag(kernel_, x_) - v.colwise().squaredNorm().transpose();
  Eigen::ArrayXd mask = (correction.array() > 0.0).cast<double>();
  VectorXd lambda = correction.cwiseMax(0.0).array() + noise_variance();
  linalg::LowRankDiag lrd(std::move(v), std::move(lambda));
  return Factors{std::move(kuu), std::move(luu), std::move(kuf), std::move(correction),
                 std::move(mask), std::move(lrd)};
}

double FitcGp::min_diag_correction() const { return factorize().correction.minCoeff(); }

VectorXd FitcGp::parameters() const {
  const Index nk = kernel_.num_params();
  VectorXd theta(nk + 1 + z_.size());
  theta.head(nk) = kernel_.to_vector();
  theta(nk) = log_noise_;
  for (Index r = 0; r < z_.rows(); ++r) theta.segment(nk + 1 + r * z_.cols(), z_.cols()) = z_.row(r).transpose();
  return theta;
}

void FitcGp::set_parameters(const VectorXd& theta) {
  const Index nk = kernel_.num_params();
  if (theta.size() != nk + 1 + z_.size()) throw DimensionMismatch("FITC parameter vector size");
  kernel_ = KernelParams::from_vector(theta.head(nk));
  log_noise_ = theta(nk);
  for (Index r = 0; r < z_.rows(); ++r) z_.row(r) = theta.segment(nk + 1 + r * z_.cols(), z_.cols()).transpose();
}

opt::ParamLayout FitcGp::layout() const {
  opt::ParamLayout l;
  l.add_dense("log_variance", 1, 1);
  l.add_dense("log_lengthscales", kernel_.log_lengthscales.size(), 1);
  l.add_dense("log_noise", 1, 1);
  l.add_dense("inducing", z_.rows(), z_.cols());
  return l;
}

ObjectiveValue FitcGp::nll() const {
  const Factors f = factorize();
  const auto& lrd = f.lrd;
  const auto n = static_cast<double>(x_.rows());
  const VectorXd alpha = lrd.solve(y_);

  ObjectiveValue out;
  out.value = 0.5 * y_.dot(alpha) + 0.5 * lrd.logdet() + 0.5 * n * kLog2Pi;

  // W = C^{-1} - alpha alpha^T, only ever touched through B W and diag(W).
  const VectorXd lambda_inv = lrd.d().cwiseInverse();
  const MatrixXd e = linalg::lower_solve(lrd.a_factor(), lrd.v() * lambda_inv.asDiagonal());
  const VectorXd w_diag =
      (lambda_inv - e.colwise().squaredNorm().transpose()).array() - alpha.array().square();

  // B = K_uu^{-1} K_uf
  const MatrixXd b =
      f.luu.lower.triangularView<Eigen::Lower>().transpose().solve(lrd.v());
  const VectorXd b_alpha = b * alpha;
  const VectorXd col_scale = lambda_inv.array() - f.mask * w_diag.array();
  MatrixXd g_uf = b * col_scale.asDiagonal();
  g_uf.noalias() -= (b * e.transpose()) * e;
  g_uf.noalias() -= b_alpha * alpha.transpose();
  const MatrixXd g_uu = -0.5 * g_uf * b.transpose();

  const auto adj_uf = kernel_backward(kernel_, z_, x_, f.kuf, g_uf);
  const auto adj_uu = kernel_backward(kernel_, z_, z_, f.kuu, g_uu);

  const Index nk = kernel_.num_params();
  out.gradient = VectorXd::Zero(nk + 1 + z_.size());
  out.gradient(0) = adj_uf.d_log_variance + adj_uu.d_log_variance +
                    0.5 * (f.mask * w_diag.array()).sum() * kernel_.variance();
  out.gradient.segment(1, nk - 1) = adj_uf.d_log_lengthscales + adj_uu.d_log_lengthscales;
  out.gradient(nk) = 0.5 * w_diag.sum() * noise_variance();
  const MatrixXd dz = adj_uf.d_xa + adj_uu.d_xa + adj_uu.d_xb;
  for (Index r = 0; r < z_.rows(); ++r) out.gradient.segment(nk + 1 + r * z_.cols(), z_.cols()) = dz.row(r).transpose();
  return out;
}

FitcPosterior FitcGp::posterior() const {
  Factors f = factorize();
  FitcPosterior p;
  p.kernel = kernel_;
  p.log_noise = log_noise_;
  p.inducing = z_;
  p.kuu_chol = std::move(f.luu);
  p.v_alpha = f.lrd.v() * f.lrd.solve(y_);
  p.a_chol = f.lrd.a_factor();
  return p;
}

GaussianPrediction FitcPosterior::predict(const MatrixXd& xs, bool observation_space) const {
  if (xs.cols() != inducing.cols()) {
    throw DimensionMismatch("model expects " + std::to_string(inducing.cols()) +
                            " input columns, got " + std::to_string(xs.cols()));
  }
  const MatrixXd w = linalg::lower_solve(kuu_chol, kernel_matrix(kernel, inducing, xs));
  const MatrixXd aw = linalg::lower_solve(a_chol, w);
  GaussianPrediction p;
  p.mean = w.transpose() * v_alpha;
  p.variance = (kernel_diag(kernel, xs) - w.colwise().squaredNorm().transpose() +
                aw.colwise().squaredNorm().transpose())
                   .cwiseMax(0.0);
  if (observation_space) p.variance.array() += std::exp(log_noise);
  return p;
}

GaussianPrediction FitcGp::predict(const MatrixXd& xs, bool observation_space) const {
  return posterior().predict(xs, observation_space);
}

FitcGp FitcGp::fit(const data::Dataset& d, Index m, const FitcOptions& options) {
  options.train.validate();
  if (d.size() < 1) throw TooFewPoints("FITC needs at least one training point");
  if (m < 1 || m > d.size()) {
    throw TooFewPoints("FITC needs 1 <= m <= n, got m=" + std::to_string(m) + ", n=" +
                       std::to_string(d.size()));
  }
  const MatrixXd z0 = init_inducing(d.x, m, options.train.seed);
  const double lengthscale = median_pairwise_distance(d.x);
  KernelParams kernel = options.ard ? KernelParams::ard(1.0, VectorXd::Constant(d.dims(), lengthscale))
                                    : KernelParams::isotropic(1.0, lengthscale);
  const double var_y = d.size() > 1 ? (d.y.array() - d.y.mean()).square().mean() : 1.0;
  const double floor = options.min_noise_variance;
  const double noise0 = std::max(0.1 * var_y, 2.0 * floor);

  FitcGp model(kernel, std::log(noise0), z0, d.x, d.y);
  const Index nk = kernel.num_params();
  const Index n_free = options.optimize_inducing ? nk + 1 + z0.size() : nk + 1;

  // Optimizer coordinates: kernel logs, log(noise - floor), [Z].
  VectorXd t0 = model.parameters().head(n_free);
  t0(nk) = std::log(noise0 - floor);

  auto to_model = [&](const VectorXd& t) {
    VectorXd theta = model.parameters();
    theta.head(n_free) = t;
    theta(nk) = std::log(floor + std::exp(t(nk)));
    return theta;
  };

  FitcGp probe = model;
  const opt::Objective objective = [&](const VectorXd& t, VectorXd* grad) {
    probe.set_parameters(to_model(t));
    const ObjectiveValue v = probe.nll();
    if (grad) {
      *grad = v.gradient.head(n_free);
      (*grad)(nk) = v.gradient(nk) / probe.noise_variance() * std::exp(t(nk));
    }
    return v.value;
  };

  auto result = opt::minimize_lbfgs(objective, t0, options.train.max_steps, options.train.tolerance);
  model.set_parameters(to_model(result.x));
  model.fit_summary_ = std::move(result);
  return model;
}

}  // namespace deepgp
