#pragma once

#include <Eigen/Dense>

#include "deepgp/data.hpp"
#include "deepgp/kernels.hpp"
#include "deepgp/linalg.hpp"
#include "deepgp/opt.hpp"
#include "deepgp/prediction.hpp"

namespace deepgp {

struct FitcOptions {
  opt::TrainConfig train{.max_steps = 300, .tolerance = 1e-5};
  bool ard = false;
  bool optimize_inducing = true;
  double min_noise_variance = 1e-6;
};

/// Everything FITC prediction needs; no reference to the training set.
///
///   mean(x*) = w*^T v_alpha
///   var(x*)  = k(x*, x*) - |w*|^2 + |L_A^{-1} w*|^2,   w* = L_uu^{-1} k_u*
struct FitcPosterior {
  KernelParams kernel;
  double log_noise = 0.0;
  MatrixXd inducing;            // m x D
  linalg::CholFactor kuu_chol;  // recomputed from inducing + kernel
  linalg::CholFactor a_chol;    // I + V Lambda^{-1} V^T
  VectorXd v_alpha;             // V (Q_ff + Lambda)^{-1} y

  GaussianPrediction predict(const MatrixXd& xs, bool observation_space = false) const;
};

/// FITC sparse GP: prior covariance Q_ff + diag(K_ff - Q_ff), exact inference
/// in that approximate model via a low-rank-plus-diagonal factorization.
class FitcGp {
 public:
  FitcGp(KernelParams kernel, double log_noise, MatrixXd inducing, MatrixXd x, VectorXd y);

  const KernelParams& kernel() const { return kernel_; }
  double log_noise() const { return log_noise_; }
  double noise_variance() const;
  const MatrixXd& inducing() const { return z_; }
  const MatrixXd& inputs() const { return x_; }
  const VectorXd& targets() const { return y_; }
  Index num_inducing() const { return z_.rows(); }

  /// [kernel params..., log_noise, Z row-major]
  VectorXd parameters() const;
  void set_parameters(const VectorXd& theta);
  opt::ParamLayout layout() const;

  /// Negative log marginal likelihood under the FITC covariance and its
  /// gradient over parameters(), in O(n m^2).
  ObjectiveValue nll() const;

  GaussianPrediction predict(const MatrixXd& xs, bool observation_space = false) const;
  FitcPosterior posterior() const;

  /// Smallest value of diag(K_ff - Q_ff) before clamping at zero.
  double min_diag_correction() const;

  /// k-means++ inducing initialization, then L-BFGS over kernel, noise and
  /// (optionally) inducing locations.
  static FitcGp fit(const data::Dataset& d, Index m, const FitcOptions& options = {});

  const opt::MinimizeResult& fit_summary() const { return fit_summary_; }

 private:
  struct Factors;
  Factors factorize() const;

  KernelParams kernel_;
  double log_noise_;
  MatrixXd z_;
  MatrixXd x_;
  VectorXd y_;
  opt::MinimizeResult fit_summary_;
};

}  // namespace deepgp
