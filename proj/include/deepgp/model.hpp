#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "deepgp/data.hpp"
#include "deepgp/dgp.hpp"
#include "deepgp/exact_gp.hpp"
#include "deepgp/fitc.hpp"
#include "deepgp/opt.hpp"
#include "deepgp/prediction.hpp"

namespace deepgp {

enum class ModelFamily { exact, fitc, svgp, dgp };

std::string to_string(ModelFamily family);
/// Throws ConfigError for an unknown name.
ModelFamily parse_family(const std::string& name);

/// Everything needed to fit one model family on a dataset. Unset optional
/// fields take family defaults (see resolved()).
struct ModelConfig {
  ModelFamily family = ModelFamily::exact;
  std::optional<Index> layers;        // dgp: default 2; svgp: must be 1
  Index hidden_width = 5;
  std::optional<Index> inducing;      // fitc/svgp/dgp: default 300; exact: must be unset
  bool ard = false;
  Index pca_components = 0;           // 0 keeps the standardized features
  Index subsample = 0;                // exact only; 0 fits on every row
  double initial_noise = 0.01;        // svgp/dgp, standardized units

  std::optional<int> max_steps;
  std::optional<double> learning_rate;
  std::optional<Index> batch_size;
  std::optional<int> mc_samples;
  std::optional<double> tolerance;

  /// Throws ConfigError / ArchitectureInvalid on an inconsistent combination.
  void validate() const;
  /// Copy with family defaults filled in.
  ModelConfig resolved() const;
  /// Optimizer settings for this family, seeded.
  opt::TrainConfig train_config(std::uint64_t seed) const;
  DgpArchitecture architecture() const;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int steps = 0;
  double final_objective = 0.0;  // minimized value: nll, or -ELBO
  Index n_train = 0;
};

/// A fitted family plus the transform chain mapping raw features into its
/// input space and its outputs back into target units.
struct FittedModel {
  ModelConfig config;
  data::StandardizeTransform standardize;
  std::optional<data::PcaTransform> pca;
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  std::variant<std::monostate, ExactGp, FitcPosterior, DgpModel> model;
  TrainingMeta meta;

  Index input_dims() const { return standardize.features.mean.size(); }
  MatrixXd transform_inputs(const MatrixXd& x_raw) const;

  /// Observation-space moments in target units. `samples` and `seed` only
  /// matter for deep models (L > 1).
  GaussianPrediction predict(const MatrixXd& x_raw, int samples = 200, std::uint64_t seed = 0) const;
};

struct TraceEntry {
  int step = 0;
  double objective = 0.0;
  std::optional<double> wall_ms;
};

struct TrainResult {
  FittedModel model;
  std::vector<TraceEntry> trace;
};

/// Standardize (and optionally PCA) on `train`, then fit the family.
TrainResult fit_model(const data::Dataset& train, const ModelConfig& config, std::uint64_t seed,
                      bool record_time = false);

}  // namespace deepgp
