#include "deepgp/model.hpp"

#include <algorithm>

#include "deepgp/errors.hpp"

namespace deepgp {

std::string to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::exact: return "exact";
    case ModelFamily::fitc: return "fitc";
    case ModelFamily::svgp: return "svgp";
    case ModelFamily::dgp: return "dgp";
  }
  return "unknown";
}

ModelFamily parse_family(const std::string& name) {
  if (name == "exact") return ModelFamily::exact;
  if (name == "fitc") return ModelFamily::fitc;
  if (name == "svgp") return ModelFamily::svgp;
  if (name == "dgp") return ModelFamily::dgp;
  throw ConfigError("unknown model family '" + name + "' (expected exact, fitc, svgp or dgp)");
}

void ModelConfig::validate() const {
  const std::string f = to_string(family);
  if (family == ModelFamily::exact && inducing)
    throw ConfigError("exact GP takes no inducing-point count");
  if (family != ModelFamily::exact && subsample != 0)
    throw ConfigError("subsample applies to the exact family only");
  if (family != ModelFamily::dgp && family != ModelFamily::svgp && layers && *layers != 1)
    throw ArchitectureInvalid(f + " is a single-layer model");
  if (family == ModelFamily::svgp && layers && *layers != 1)
    throw ArchitectureInvalid("svgp has exactly one layer; use family dgp for L > 1");
  if (layers && *layers < 1) throw ArchitectureInvalid("layers must be >= 1");
  if (hidden_width < 1) throw ArchitectureInvalid("hidden width must be >= 1");
  if (inducing && *inducing < 1) throw ConfigError("inducing must be >= 1");
  if (pca_components < 0) throw ConfigError("pca components must be >= 0");
  if (subsample < 0) throw ConfigError("subsample must be >= 0");
  if (!(initial_noise > 0.0)) throw ConfigError("initial noise must be positive");
  resolved().train_config(0).validate();
}

ModelConfig ModelConfig::resolved() const {
  ModelConfig c = *this;
  if (!c.layers) c.layers = family == ModelFamily::dgp ? 2 : 1;
  if (!c.inducing && family != ModelFamily::exact) c.inducing = 300;
  switch (family) {
    case ModelFamily::exact:
      if (!c.max_steps) c.max_steps = 200;
      if (!c.tolerance) c.tolerance = 1e-5;
      break;
    case ModelFamily::fitc:
      if (!c.max_steps) c.max_steps = 300;
      if (!c.tolerance) c.tolerance = 1e-5;
      break;
    case ModelFamily::svgp:
    case ModelFamily::dgp: {
      const opt::TrainConfig defaults;
      if (!c.max_steps) c.max_steps = defaults.max_steps;
      if (!c.tolerance) c.tolerance = defaults.tolerance;
      break;
    }
  }
  const opt::TrainConfig defaults;
  if (!c.learning_rate) c.learning_rate = defaults.learning_rate;
  if (!c.batch_size) c.batch_size = defaults.batch_size;
  if (!c.mc_samples) c.mc_samples = defaults.mc_samples;
  return c;
}

opt::TrainConfig ModelConfig::train_config(std::uint64_t seed) const {
  const ModelConfig c = resolved();
  opt::TrainConfig t;
  t.max_steps = *c.max_steps;
  t.tolerance = *c.tolerance;
  t.learning_rate = *c.learning_rate;
  t.batch_size = *c.batch_size;
  t.mc_samples = *c.mc_samples;
  t.seed = seed;
  return t;
}

DgpArchitecture ModelConfig::architecture() const {
  const ModelConfig c = resolved();
  DgpArchitecture a;
  a.layers = *c.layers;
  a.hidden_width = c.hidden_width;
  a.inducing = c.inducing.value_or(0);
  a.ard = c.ard;
  return a;
}

MatrixXd FittedModel::transform_inputs(const MatrixXd& x_raw) const {
  if (x_raw.cols() != input_dims())
    throw DimensionMismatch("model expects " + std::to_string(input_dims()) + " features, got " +
                            std::to_string(x_raw.cols()));
  MatrixXd z = standardize.features.apply(x_raw);
  if (pca) z = pca->apply(z);
  return z;
}

GaussianPrediction FittedModel::predict(const MatrixXd& x_raw, int samples, std::uint64_t seed) const {
  const MatrixXd z = transform_inputs(x_raw);
  GaussianPrediction p;
  if (const auto* gp = std::get_if<ExactGp>(&model)) {
    p = gp->predict(z, true);
  } else if (const auto* post = std::get_if<FitcPosterior>(&model)) {
    p = post->predict(z, true);
  } else if (const auto* dgp = std::get_if<DgpModel>(&model)) {
    p = dgp_predict(*dgp, z, dgp->depth() == 1 ? 1 : samples, seed, true).collapsed;
  } else {
    throw ConfigError("model holds no fitted family");
  }
  return {standardize.invert_target(p.mean), standardize.invert_variance(p.variance)};
}

TrainResult fit_model(const data::Dataset& train_in, const ModelConfig& config_in, std::uint64_t seed,
                      bool record_time) {
  config_in.validate();
  const ModelConfig config = config_in.resolved();
  train_in.validate();
  if (train_in.size() == 0) throw EmptyInput("training set is empty");

  data::Dataset train = train_in;
  if (config.family == ModelFamily::exact && config.subsample > 0 && train.size() > config.subsample) {
    auto order = data::shuffled_indices(train.size(), seed);
    order.resize(static_cast<std::size_t>(config.subsample));
    train = train.subset(order);
  }

  TrainResult out;
  FittedModel& fm = out.model;
  fm.config = config;
  fm.feature_names = train.feature_names;
  fm.target_name = train.target_name;
  fm.standardize = data::fit_standardize(train);
  data::Dataset z = fm.standardize.apply(train);
  if (config.pca_components > 0) {
    fm.pca = data::fit_pca(z, config.pca_components);
    z = fm.pca->apply(z);
  }
  fm.meta.seed = seed;
  fm.meta.n_train = train.size();

  const opt::TrainConfig tc = config.train_config(seed);
  auto lbfgs_trace = [&](const opt::MinimizeResult& r) {
    for (std::size_t i = 0; i < r.trace.size(); ++i)
      out.trace.push_back({static_cast<int>(i), r.trace[i], std::nullopt});
    fm.meta.steps = r.iterations;
    fm.meta.final_objective = r.value;
  };

  switch (config.family) {
    case ModelFamily::exact: {
      ExactGpOptions o;
      o.train = tc;
      o.ard = config.ard;
      ExactGp gp = ExactGp::fit(z, o);
      lbfgs_trace(gp.fit_summary());
      fm.model = std::move(gp);
      break;
    }
    case ModelFamily::fitc: {
      FitcOptions o;
      o.train = tc;
      o.ard = config.ard;
      const FitcGp gp = FitcGp::fit(z, *config.inducing, o);
      lbfgs_trace(gp.fit_summary());
      fm.model = gp.posterior();
      break;
    }
    case ModelFamily::svgp:
    case ModelFamily::dgp: {
      DgpTrainOptions o;
      o.train = tc;
      o.initial_noise = config.initial_noise;
      DgpFitResult r = dgp_fit(z, config.architecture(), o);
      for (const auto& row : r.trace)
        out.trace.push_back({row.step, -row.elbo,
                             record_time ? std::optional<double>(row.wall_ms) : std::nullopt});
      fm.meta.steps = tc.max_steps;
      fm.meta.final_objective = r.trace.empty() ? 0.0 : -r.trace.back().elbo;
      fm.model = std::move(r.model);
      break;
    }
  }
  return out;
}

}  // namespace deepgp
