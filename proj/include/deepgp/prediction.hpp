#pragma once

#include <Eigen/Dense>

namespace deepgp {

/// Per-row Gaussian predictive moments.
struct GaussianPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  Eigen::Index size() const { return mean.size(); }
};

/// Returned by every differentiable objective: value and gradient over the
/// model's flat parameter vector.
struct ObjectiveValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

}  // namespace deepgp
