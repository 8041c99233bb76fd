#pragma once

#include <Eigen/Dense>

#include "deepgp/data.hpp"
#include "deepgp/kernels.hpp"
#include "deepgp/linalg.hpp"
#include "deepgp/opt.hpp"
#include "deepgp/prediction.hpp"

namespace deepgp {

struct ExactGpOptions {
  opt::TrainConfig train{.max_steps = 200, .tolerance = 1e-5};
  Index max_points = 10000;
  bool allow_oversize = false;
  bool ard = false;
  double min_noise_variance = 1e-6;
};

/// Exact GP regression with zero prior mean and Gaussian noise.
///
/// The Cholesky factor of (K_ff + noise I) and alpha = (K_ff + noise I)^{-1} y
/// are rebuilt whenever the hyperparameters change, so a model is always
/// consistent with its parameters.
class ExactGp {
 public:
  ExactGp(KernelParams kernel, double log_noise, MatrixXd x, VectorXd y);

  const KernelParams& kernel() const { return kernel_; }
  double log_noise() const { return log_noise_; }
  double noise_variance() const;
  const MatrixXd& inputs() const { return x_; }
  const VectorXd& targets() const { return y_; }
  const VectorXd& alpha() const { return alpha_; }
  const linalg::CholFactor& factor() const { return chol_; }
  Index size() const { return x_.rows(); }

  void set_hyperparameters(KernelParams kernel, double log_noise);

  /// [kernel params..., log_noise]
  VectorXd hyperparameters() const;
  void set_hyperparameters(const VectorXd& theta);

  /// Negative log marginal likelihood with its gradient over hyperparameters().
  ObjectiveValue nll() const;

  /// Latent moments at xs; `observation_space` adds the noise variance.
  GaussianPrediction predict(const MatrixXd& xs, bool observation_space = false) const;

  /// Median-heuristic initialization followed by L-BFGS on nll. Throws
  /// TooManyPoints above the size cap unless overridden.
  static ExactGp fit(const data::Dataset& d, const ExactGpOptions& options = {});

  /// Result of the last fit (iterations, accepted objective values).
  const opt::MinimizeResult& fit_summary() const { return fit_summary_; }

 private:
  void refresh();

  KernelParams kernel_;
  double log_noise_;
  MatrixXd x_;
  VectorXd y_;
  linalg::CholFactor chol_;
  VectorXd alpha_;
  opt::MinimizeResult fit_summary_;
};

/// Median of pairwise Euclidean distances, over at most `max_rows` rows.
double median_pairwise_distance(const MatrixXd& x, Index max_rows = 1000);

}  // namespace deepgp
