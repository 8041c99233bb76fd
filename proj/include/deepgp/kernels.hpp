#pragma once

#include <vector>

#include <Eigen/Dense>

namespace deepgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Squared-exponential kernel hyperparameters, stored in log space.
///
///   k(x, y) = variance * exp(-0.5 * sum_d (x_d - y_d)^2 / lengthscale_d^2)
///
/// A single lengthscale is broadcast over every input dimension (isotropic);
/// one per dimension gives the ARD variant.
struct KernelParams {
  double log_variance = 0.0;
  VectorXd log_lengthscales = VectorXd::Zero(1);

  static KernelParams isotropic(double variance, double lengthscale);
  static KernelParams ard(double variance, const VectorXd& lengthscales);

  double variance() const;
  bool is_ard() const { return log_lengthscales.size() > 1; }
  Index num_params() const { return 1 + log_lengthscales.size(); }

  /// Lengthscale per input column, broadcasting the isotropic case.
  VectorXd lengthscales(Index dims) const;

  /// [log_variance, log_lengthscales...]
  VectorXd to_vector() const;
  static KernelParams from_vector(const VectorXd& v);
};

MatrixXd kernel_matrix(const KernelParams& p, const MatrixXd& xa, const MatrixXd& xb);
VectorXd kernel_diag(const KernelParams& p, const MatrixXd& xa);

/// dK/d(log variance) and dK/d(log lengthscale_d), one matrix per lengthscale.
struct KernelGrads {
  MatrixXd d_log_variance;
  std::vector<MatrixXd> d_log_lengthscales;
};

KernelGrads kernel_grads(const KernelParams& p, const MatrixXd& xa, const MatrixXd& xb);

/// Reverse-mode pullback of a scalar loss through K = kernel_matrix(p, xa, xb).
struct KernelAdjoint {
  double d_log_variance = 0.0;
  VectorXd d_log_lengthscales;
  MatrixXd d_xa;  // empty unless requested
  MatrixXd d_xb;
};

/// `k` must be kernel_matrix(p, xa, xb); `dk` is dLoss/dK (any shape-matching
/// matrix, not necessarily symmetric).
KernelAdjoint kernel_backward(const KernelParams& p, const MatrixXd& xa, const MatrixXd& xb,
                              const MatrixXd& k, const MatrixXd& dk, bool input_grads = true);

}  // namespace deepgp
