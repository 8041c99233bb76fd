#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "deepgp/prediction.hpp"

namespace deepgp::eval {

using Eigen::Index;
using Eigen::VectorXd;

/// Throws LengthMismatch, EmptyInput.
double rmse(const VectorXd& pred, const VectorXd& truth);

struct MaeResult {
  double mae = 0.0;
  double se = 0.0;  // sample sd of |error| (divisor n - 1) over sqrt(n); 0 when n = 1
  Index n = 0;
};
MaeResult mae_with_se(const VectorXd& pred, const VectorXd& truth);

struct PartitionRow {
  std::string label;
  double mae = 0.0;
  double se = 0.0;
  Index n = 0;
};

/// One row per distinct label in lexicographic order, then "Total".
/// Empty labels are reported as "unlabeled".
std::vector<PartitionRow> partitioned_mae(const VectorXd& pred, const VectorXd& truth,
                                          const std::vector<std::string>& labels);

/// (mean - y) / sqrt(variance). The caller decides the space of the variance;
/// the pipeline passes observation-space variances. Throws ZeroVariance when
/// any variance is not strictly positive.
VectorXd scaled_residuals(const GaussianPrediction& pred, const VectorXd& truth);

struct KdeCurve {
  VectorXd grid;
  VectorXd density;
  double bandwidth = 0.0;
};

/// 1.06 * sd * n^(-1/5) with the sample sd; a zero-spread sample uses sd = 1.
double silverman_bandwidth(const VectorXd& samples);

/// Gaussian KDE on a uniform grid over [min - 5h, max + 5h]. Throws
/// TooFewSamples below two samples, ConfigError for a non-positive bandwidth.
KdeCurve kde(const VectorXd& samples, std::optional<double> bandwidth = std::nullopt,
             Index grid_points = 401);

/// Single-kernel variant: evaluates the estimate at arbitrary points.
VectorXd kde_at(const VectorXd& samples, double bandwidth, const VectorXd& points);

/// N(0, 1) density on `grid` (bandwidth field left at 0).
KdeCurve normal_reference(const VectorXd& grid);

struct CalibrationReport {
  double mean_zeta = 0.0;
  double sd_zeta = 0.0;  // sample sd
  KdeCurve kde;
  VectorXd reference;
};

CalibrationReport calibration(const VectorXd& zeta, std::optional<double> bandwidth = std::nullopt);

nlohmann::json to_json(const CalibrationReport& report);
nlohmann::json to_json(const std::vector<PartitionRow>& rows);

}  // namespace deepgp::eval
