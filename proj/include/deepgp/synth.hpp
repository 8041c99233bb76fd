#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "deepgp/data.hpp"
#include "deepgp/model.hpp"

namespace deepgp::synth {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

enum class BenchmarkKind { gp_draw, step_composite, warped_gp };

std::string to_string(BenchmarkKind kind);
/// Throws ConfigError.
BenchmarkKind parse_kind(const std::string& name);

struct BenchmarkSpec {
  std::string id = "bench";
  BenchmarkKind kind = BenchmarkKind::gp_draw;
  Index dimensions = 1;
  double noise_sd = 0.05;
  Index n_train = 100;
  Index n_test = 100;
  std::uint64_t seed = 0;

  // Latent GP of gp_draw / warped_gp.
  double variance = 1.0;
  double lengthscale = 0.5;

  // Input box; unset takes the kind default ([0, 5] for GP draws,
  // [-1, 1] for step_composite).
  std::optional<double> input_low;
  std::optional<double> input_high;
  // > 0 draws each input coordinate from that many evenly spaced levels,
  // so train and test share points.
  Index input_levels = 0;

  /// Throws ConfigError.
  void validate() const;
  double low() const;
  double high() const;
};

struct BenchmarkData {
  data::Dataset train;
  data::Dataset test;
  nlohmann::json truth;  // generating parameters and closed form
};

/// Joint exact draw over train and test inputs, deduplicated before the
/// Cholesky. Throws SizeTooLargeForExactDraw above 5000 distinct inputs.
BenchmarkData gen_gp_draw(const BenchmarkSpec& spec);

/// Noise-free step_composite target:
///   s = sum(x) / sqrt(D),  t = s + 0.5 * [s > 0.3],
///   y = sin(8 t) * (1 + tanh(4 t)) / 2
double step_composite_value(const RowVectorXd& x);
BenchmarkData gen_step_composite(const BenchmarkSpec& spec);

/// sin(2 f(x)) for a GP draw f (recorded in truth).
BenchmarkData gen_warped_gp(const BenchmarkSpec& spec);

BenchmarkData generate(const BenchmarkSpec& spec);

/// Maximum number of distinct inputs in one exact draw.
inline constexpr Index kMaxExactDraw = 5000;

/// f at the rows of `x` (duplicates share one value), drawn from
/// GP(0, k) with an isotropic RBF kernel.
VectorXd draw_gp_function(const MatrixXd& x, double variance, double lengthscale, std::uint64_t seed);

struct BenchmarkModel {
  std::string id;
  ModelConfig config;
  int predict_samples = 200;
};

struct BenchmarkRow {
  std::string spec_id;
  std::string model_id;
  int rep = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double zeta_mean = 0.0;
  double zeta_sd = 0.0;
  std::optional<double> wall_ms;
};

struct BenchmarkSummary {
  std::string spec_id;
  std::string model_id;
  int reps = 0;
  double rmse = 0.0, rmse_se = 0.0;
  double mae = 0.0, mae_se = 0.0;
  double zeta_mean = 0.0, zeta_sd = 0.0;
};

struct BenchmarkResults {
  std::vector<BenchmarkRow> rows;          // spec-major, then model, then rep
  std::vector<BenchmarkSummary> summary;   // one per (spec, model)
};

/// Repetition r uses dataset seed spec.seed + r and model seed spec.seed + r.
/// Per-rep rows and the repetition averages (with standard errors across
/// repetitions) are deterministic unless `record_time` adds wall times.
BenchmarkResults run_benchmark(const std::vector<BenchmarkSpec>& specs,
                               const std::vector<BenchmarkModel>& models, int repetitions,
                               bool record_time = false);

}  // namespace deepgp::synth
