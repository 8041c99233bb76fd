#include "deepgp/exact_gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "deepgp/errors.hpp"

namespace deepgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

MatrixXd noisy_gram(const KernelParams& kernel, double noise, const MatrixXd& x) {
  MatrixXd k = kernel_matrix(kernel, x, x);
  k.diagonal().array() += noise;
  return k;
}

}  // namespace

double median_pairwise_distance(const MatrixXd& x, Index max_rows) {
  const Index n = std::min(x.rows(), max_rows);
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) d.push_back((x.row(i) - x.row(j)).norm());
  }
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

ExactGp::ExactGp(KernelParams kernel, double log_noise, MatrixXd x, VectorXd y)
    : kernel_(std::move(kernel)), log_noise_(log_noise), x_(std::move(x)), y_(std::move(y)) {
  if (x_.rows() < 1) throw TooFewPoints("exact GP needs at least one training point");
  if (y_.size() != x_.rows()) throw LengthMismatch("exact GP inputs and targets differ in length");
  refresh();
}

double ExactGp::noise_variance() const { return std::exp(log_noise_); }

void ExactGp::refresh() {
  const MatrixXd k = noisy_gram(kernel_, noise_variance(), x_);
  chol_ = linalg::cholesky(k, linalg::default_jitter(k));
  alpha_ = linalg::tri_solve(chol_, y_);
}

void ExactGp::set_hyperparameters(KernelParams kernel, double log_noise) {
  kernel_ = std::move(kernel);
  log_noise_ = log_noise;
  refresh();
}

VectorXd ExactGp::hyperparameters() const {
  VectorXd theta(kernel_.num_params() + 1);
  theta.head(kernel_.num_params()) = kernel_.to_vector();
  theta(theta.size() - 1) = log_noise_;
  return theta;
}

void ExactGp::set_hyperparameters(const VectorXd& theta) {
  set_hyperparameters(KernelParams::from_vector(theta.head(theta.size() - 1)),
                      theta(theta.size() - 1));
}

ObjectiveValue ExactGp::nll() const {
  const auto n = static_cast<double>(size());
  ObjectiveValue out;
  out.value = 0.5 * y_.dot(alpha_) + 0.5 * linalg::logdet(chol_) + 0.5 * n * kLog2Pi;

  // d nll / d theta = 0.5 tr((K^{-1} - alpha alpha^T) dK/dtheta)
  MatrixXd w = linalg::inverse(chol_);
  w.noalias() -= alpha_ * alpha_.transpose();
  const MatrixXd kff = kernel_matrix(kernel_, x_, x_);
  const auto adj = kernel_backward(kernel_, x_, x_, kff, 0.5 * w, false);

  out.gradient.resize(kernel_.num_params() + 1);
  out.gradient(0) = adj.d_log_variance;
  out.gradient.segment(1, adj.d_log_lengthscales.size()) = adj.d_log_lengthscales;
  out.gradient(out.gradient.size() - 1) = 0.5 * w.trace() * noise_variance();
  return out;
}

GaussianPrediction ExactGp::predict(const MatrixXd& xs, bool observation_space) const {
  if (xs.cols() != x_.cols()) {
    throw DimensionMismatch("model expects " + std::to_string(x_.cols()) + " input columns, got " +
                            std::to_string(xs.cols()));
  }
  const MatrixXd ksf = kernel_matrix(kernel_, xs, x_);
  GaussianPrediction p;
  p.mean = ksf * alpha_;
  const MatrixXd v = linalg::lower_solve(chol_, ksf.transpose());
  p.variance = (kernel_diag(kernel_, xs).array() - v.colwise().squaredNorm().transpose().array())
                   .cwiseMax(0.0)
                   .matrix();
  if (observation_space) p.variance.array() += noise_variance();
  return p;
}

ExactGp ExactGp::fit(const data::Dataset& d, const ExactGpOptions& options) {
  options.train.validate();
  if (d.size() < 1) throw TooFewPoints("exact GP needs at least one training point");
  if (d.size() > options.max_points && !options.allow_oversize) {
    throw TooManyPoints(std::to_string(d.size()) + " rows exceed the exact-GP cap of " +
                        std::to_string(options.max_points));
  }

  const double lengthscale = median_pairwise_distance(d.x);
  KernelParams kernel = options.ard ? KernelParams::ard(1.0, VectorXd::Constant(d.dims(), lengthscale))
                                    : KernelParams::isotropic(1.0, lengthscale);
  const double var_y = d.size() > 1 ? (d.y.array() - d.y.mean()).square().mean() : 1.0;
  const double floor = options.min_noise_variance;
  const double noise0 = std::max(0.1 * var_y, 2.0 * floor);

  // The optimizer sees log(noise - floor) so the noise never drops below the floor.
  const Index nk = kernel.num_params();
  VectorXd theta0(nk + 1);
  theta0.head(nk) = kernel.to_vector();
  theta0(nk) = std::log(noise0 - floor);

  auto unpack = [&](const VectorXd& t, KernelParams& k, double& log_noise) {
    k = KernelParams::from_vector(t.head(nk));
    log_noise = std::log(floor + std::exp(t(nk)));
  };

  const opt::Objective objective = [&](const VectorXd& t, VectorXd* grad) {
    KernelParams k;
    double log_noise = 0.0;
    unpack(t, k, log_noise);
    const ExactGp model(k, log_noise, d.x, d.y);
    const ObjectiveValue v = model.nll();
    if (grad) {
      *grad = v.gradient;
      // d/dt of noise = floor + e^t, given the gradient in log-noise.
      const double noise = std::exp(log_noise);
      (*grad)(nk) = v.gradient(nk) / noise * std::exp(t(nk));
    }
    return v.value;
  };

  auto result = opt::minimize_lbfgs(objective, theta0, options.train.max_steps,
                                    options.train.tolerance);
  KernelParams k;
  double log_noise = 0.0;
  unpack(result.x, k, log_noise);
  ExactGp model(k, log_noise, d.x, d.y);
  model.fit_summary_ = std::move(result);
  return model;
}

}  // namespace deepgp
