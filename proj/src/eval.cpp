#include "deepgp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "deepgp/errors.hpp"

namespace deepgp::eval {

namespace {

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);

void check_pair(const VectorXd& pred, const VectorXd& truth) {
  if (pred.size() != truth.size())
    throw LengthMismatch("prediction has " + std::to_string(pred.size()) + " rows, truth has " +
                         std::to_string(truth.size()));
  if (pred.size() == 0) throw EmptyInput("no rows to score");
}

double sample_sd(const VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

MaeResult mae_of(const VectorXd& abs_err) {
  MaeResult r;
  r.n = abs_err.size();
  r.mae = abs_err.mean();
  r.se = sample_sd(abs_err) / std::sqrt(static_cast<double>(r.n));
  return r;
}

}  // namespace

double rmse(const VectorXd& pred, const VectorXd& truth) {
  check_pair(pred, truth);
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

MaeResult mae_with_se(const VectorXd& pred, const VectorXd& truth) {
  check_pair(pred, truth);
  return mae_of((pred - truth).cwiseAbs());
}

std::vector<PartitionRow> partitioned_mae(const VectorXd& pred, const VectorXd& truth,
                                          const std::vector<std::string>& labels) {
  check_pair(pred, truth);
  if (static_cast<Index>(labels.size()) != pred.size())
    throw LengthMismatch("labels have " + std::to_string(labels.size()) + " rows, predictions " +
                         std::to_string(pred.size()));
  const VectorXd abs_err = (pred - truth).cwiseAbs();
  std::map<std::string, std::vector<double>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i)
    groups[labels[i].empty() ? "unlabeled" : labels[i]].push_back(abs_err(static_cast<Index>(i)));

  std::vector<PartitionRow> rows;
  auto push = [&rows](const std::string& label, const VectorXd& e) {
    const MaeResult r = mae_of(e);
    rows.push_back({label, r.mae, r.se, r.n});
  };
  for (const auto& [label, errs] : groups)
    push(label, Eigen::Map<const VectorXd>(errs.data(), static_cast<Index>(errs.size())));
  push("Total", abs_err);
  return rows;
}

VectorXd scaled_residuals(const GaussianPrediction& pred, const VectorXd& truth) {
  check_pair(pred.mean, truth);
  if (pred.variance.size() != pred.mean.size())
    throw LengthMismatch("variance and mean lengths differ");
  for (Index i = 0; i < pred.variance.size(); ++i)
    if (!(pred.variance(i) > 0.0))
      throw ZeroVariance("predictive variance at row " + std::to_string(i) + " is not positive");
  return (pred.mean - truth).array() / pred.variance.array().sqrt();
}

double silverman_bandwidth(const VectorXd& samples) {
  if (samples.size() < 2) throw TooFewSamples("need at least 2 samples for a bandwidth");
  double sd = sample_sd(samples);
  if (!(sd > 0.0)) sd = 1.0;
  return 1.06 * sd * std::pow(static_cast<double>(samples.size()), -0.2);
}

VectorXd kde_at(const VectorXd& samples, double bandwidth, const VectorXd& points) {
  if (samples.size() < 1) throw TooFewSamples("no samples");
  if (!(bandwidth > 0.0)) throw ConfigError("KDE bandwidth must be positive");
  // Sorted samples let each grid point skip kernels beyond 40 bandwidths.
  std::vector<double> s(samples.data(), samples.data() + samples.size());
  std::sort(s.begin(), s.end());
  const double cutoff = 40.0 * bandwidth;
  const double norm = kInvSqrt2Pi / (bandwidth * static_cast<double>(s.size()));
  VectorXd out(points.size());
  for (Index g = 0; g < points.size(); ++g) {
    const double x = points(g);
    auto lo = std::lower_bound(s.begin(), s.end(), x - cutoff);
    auto hi = std::upper_bound(lo, s.end(), x + cutoff);
    double acc = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const double u = (x - *it) / bandwidth;
      acc += std::exp(-0.5 * u * u);
    }
    out(g) = acc * norm;
  }
  return out;
}

KdeCurve kde(const VectorXd& samples, std::optional<double> bandwidth, Index grid_points) {
  if (samples.size() < 2) throw TooFewSamples("KDE needs at least 2 samples");
  if (grid_points < 2) throw ConfigError("KDE grid needs at least 2 points");
  KdeCurve c;
  c.bandwidth = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  if (!(c.bandwidth > 0.0)) throw ConfigError("KDE bandwidth must be positive");
  c.grid = VectorXd::LinSpaced(grid_points, samples.minCoeff() - 5.0 * c.bandwidth,
                               samples.maxCoeff() + 5.0 * c.bandwidth);
  c.density = kde_at(samples, c.bandwidth, c.grid);
  return c;
}

KdeCurve normal_reference(const VectorXd& grid) {
  KdeCurve c;
  c.grid = grid;
  c.density = (-0.5 * grid.array().square()).exp() * kInvSqrt2Pi;
  return c;
}

CalibrationReport calibration(const VectorXd& zeta, std::optional<double> bandwidth) {
  if (zeta.size() < 2) throw TooFewSamples("calibration needs at least 2 residuals");
  CalibrationReport r;
  r.mean_zeta = zeta.mean();
  r.sd_zeta = sample_sd(zeta);
  r.kde = kde(zeta, bandwidth);
  r.reference = normal_reference(r.kde.grid).density;
  return r;
}

nlohmann::json to_json(const CalibrationReport& report) {
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"mean_zeta", report.mean_zeta},
          {"sd_zeta", report.sd_zeta},
          {"kde",
           {{"bandwidth", report.kde.bandwidth},
            {"grid", vec(report.kde.grid)},
            {"density", vec(report.kde.density)}}},
          {"reference_density", vec(report.reference)}};
}

nlohmann::json to_json(const std::vector<PartitionRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back({{"label", r.label}, {"mae", r.mae}, {"se", r.se}, {"n", r.n}});
  return out;
}

}  // namespace deepgp::eval
