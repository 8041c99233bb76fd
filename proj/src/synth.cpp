#include "deepgp/synth.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <random>

#include "deepgp/errors.hpp"
#include "deepgp/eval.hpp"
#include "deepgp/kernels.hpp"
#include "deepgp/linalg.hpp"

namespace deepgp::synth {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent engines for inputs, latent function and noise.
std::uint64_t substream(std::uint64_t seed, std::uint64_t stream) { return splitmix(splitmix(seed) ^ stream); }

MatrixXd draw_inputs(const BenchmarkSpec& spec, Index n, std::mt19937_64& rng) {
  MatrixXd x(n, spec.dimensions);
  const double lo = spec.low(), hi = spec.high();
  if (spec.input_levels > 0) {
    std::uniform_int_distribution<Index> level(0, spec.input_levels - 1);
    const double step = spec.input_levels > 1 ? (hi - lo) / static_cast<double>(spec.input_levels - 1) : 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < spec.dimensions; ++j) x(i, j) = lo + step * static_cast<double>(level(rng));
  } else {
    std::uniform_real_distribution<double> u(lo, hi);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < spec.dimensions; ++j) x(i, j) = u(rng);
  }
  return x;
}

struct Inputs {
  MatrixXd train;
  MatrixXd test;
  MatrixXd all() const {
    MatrixXd a(train.rows() + test.rows(), train.cols());
    a << train, test;
    return a;
  }
};

Inputs draw_split_inputs(const BenchmarkSpec& spec) {
  std::mt19937_64 rng(substream(spec.seed, 0));
  Inputs in;
  in.train = draw_inputs(spec, spec.n_train, rng);
  in.test = draw_inputs(spec, spec.n_test, rng);
  return in;
}

VectorXd noise(const BenchmarkSpec& spec, Index n) {
  std::mt19937_64 rng(substream(spec.seed, 2));
  std::normal_distribution<double> normal;
  VectorXd e(n);
  for (Index i = 0; i < n; ++i) e(i) = spec.noise_sd * normal(rng);
  return e;
}

data::Dataset make_set(const MatrixXd& x, const VectorXd& y) {
  data::Dataset d;
  d.x = x;
  d.y = y;
  for (Index j = 0; j < x.cols(); ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  d.target_name = "y";
  d.row_ids.resize(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) d.row_ids[static_cast<std::size_t>(i)] = i;
  return d;
}

BenchmarkData assemble(const BenchmarkSpec& spec, const Inputs& in, const VectorXd& f_all) {
  const Index nt = spec.n_train;
  const VectorXd y = f_all + noise(spec, f_all.size());
  BenchmarkData out;
  out.train = make_set(in.train, y.head(nt));
  out.test = make_set(in.test, y.tail(spec.n_test));
  return out;
}

nlohmann::json base_truth(const BenchmarkSpec& spec) {
  return {{"kind", to_string(spec.kind)},
          {"dimensions", spec.dimensions},
          {"noise_sd", spec.noise_sd},
          {"noise_variance", spec.noise_sd * spec.noise_sd},
          {"input_low", spec.low()},
          {"input_high", spec.high()},
          {"seed", spec.seed}};
}

void require_kind(const BenchmarkSpec& spec, BenchmarkKind kind) {
  spec.validate();
  if (spec.kind != kind)
    throw ConfigError("spec '" + spec.id + "' has kind " + to_string(spec.kind) + ", expected " +
                      to_string(kind));
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return m / static_cast<double>(v.size());
}

}  // namespace

std::string to_string(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::gp_draw: return "gp_draw";
    case BenchmarkKind::step_composite: return "step_composite";
    case BenchmarkKind::warped_gp: return "warped_gp";
  }
  return "unknown";
}

BenchmarkKind parse_kind(const std::string& name) {
  if (name == "gp_draw") return BenchmarkKind::gp_draw;
  if (name == "step_composite") return BenchmarkKind::step_composite;
  if (name == "warped_gp") return BenchmarkKind::warped_gp;
  throw ConfigError("unknown benchmark kind '" + name + "' (expected gp_draw, step_composite or warped_gp)");
}

double BenchmarkSpec::low() const {
  if (input_low) return *input_low;
  return kind == BenchmarkKind::step_composite ? -1.0 : 0.0;
}

double BenchmarkSpec::high() const {
  if (input_high) return *input_high;
  return kind == BenchmarkKind::step_composite ? 1.0 : 5.0;
}

void BenchmarkSpec::validate() const {
  if (dimensions < 1) throw ConfigError("benchmark dimensions must be >= 1");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("noise must be >= 0");
  if (n_train < 1 || n_test < 1) throw ConfigError("benchmark sizes must be >= 1");
  if (!(variance > 0.0) || !(lengthscale > 0.0)) throw ConfigError("GP variance and lengthscale must be positive");
  if (!(high() > low())) throw ConfigError("input box must have high > low");
  if (input_levels < 0) throw ConfigError("input levels must be >= 0");
}

VectorXd draw_gp_function(const MatrixXd& x, double variance, double lengthscale, std::uint64_t seed) {
  std::map<std::vector<double>, Index> index;
  std::vector<Index> slot(static_cast<std::size_t>(x.rows()));
  std::vector<Index> unique_rows;
  for (Index i = 0; i < x.rows(); ++i) {
    std::vector<double> key(static_cast<std::size_t>(x.cols()));
    for (Index j = 0; j < x.cols(); ++j) key[static_cast<std::size_t>(j)] = x(i, j);
    auto [it, inserted] = index.emplace(std::move(key), static_cast<Index>(unique_rows.size()));
    if (inserted) unique_rows.push_back(i);
    slot[static_cast<std::size_t>(i)] = it->second;
  }
  const Index u = static_cast<Index>(unique_rows.size());
  if (u > kMaxExactDraw)
    throw SizeTooLargeForExactDraw(std::to_string(u) + " distinct inputs exceed the cap of " +
                                   std::to_string(kMaxExactDraw));
  MatrixXd xu(u, x.cols());
  for (Index k = 0; k < u; ++k) xu.row(k) = x.row(unique_rows[static_cast<std::size_t>(k)]);
  const MatrixXd k = kernel_matrix(KernelParams::isotropic(variance, lengthscale), xu, xu);
  const auto chol = linalg::cholesky(k, 1e-10 * variance);

  std::mt19937_64 rng(substream(seed, 1));
  std::normal_distribution<double> normal;
  VectorXd z(u);
  for (Index i = 0; i < u; ++i) z(i) = normal(rng);
  const VectorXd fu = chol.lower.triangularView<Eigen::Lower>() * z;

  VectorXd f(x.rows());
  for (Index i = 0; i < x.rows(); ++i) f(i) = fu(slot[static_cast<std::size_t>(i)]);
  return f;
}

BenchmarkData gen_gp_draw(const BenchmarkSpec& spec) {
  require_kind(spec, BenchmarkKind::gp_draw);
  const Inputs in = draw_split_inputs(spec);
  BenchmarkData out = assemble(spec, in, draw_gp_function(in.all(), spec.variance, spec.lengthscale, spec.seed));
  out.truth = base_truth(spec);
  out.truth["variance"] = spec.variance;
  out.truth["lengthscale"] = spec.lengthscale;
  return out;
}

double step_composite_value(const RowVectorXd& x) {
  const double s = x.sum() / std::sqrt(static_cast<double>(x.size()));
  const double t = s + (s > 0.3 ? 0.5 : 0.0);
  return std::sin(8.0 * t) * 0.5 * (1.0 + std::tanh(4.0 * t));
}

BenchmarkData gen_step_composite(const BenchmarkSpec& spec) {
  require_kind(spec, BenchmarkKind::step_composite);
  const Inputs in = draw_split_inputs(spec);
  const MatrixXd all = in.all();
  VectorXd f(all.rows());
  for (Index i = 0; i < all.rows(); ++i) f(i) = step_composite_value(all.row(i));
  BenchmarkData out = assemble(spec, in, f);
  out.truth = base_truth(spec);
  out.truth["h"] = "t = s + 0.5 * [s > 0.3], s = sum(x) / sqrt(D)";
  out.truth["g"] = "sin(8 t) * (1 + tanh(4 t)) / 2";
  out.truth["bayes_rmse"] = spec.noise_sd;
  return out;
}

BenchmarkData gen_warped_gp(const BenchmarkSpec& spec) {
  require_kind(spec, BenchmarkKind::warped_gp);
  const Inputs in = draw_split_inputs(spec);
  const VectorXd latent = draw_gp_function(in.all(), spec.variance, spec.lengthscale, spec.seed);
  BenchmarkData out = assemble(spec, in, (2.0 * latent.array()).sin().matrix());
  out.truth = base_truth(spec);
  out.truth["variance"] = spec.variance;
  out.truth["lengthscale"] = spec.lengthscale;
  out.truth["g"] = "sin(2 f)";
  out.truth["bayes_rmse"] = spec.noise_sd;
  return out;
}

BenchmarkData generate(const BenchmarkSpec& spec) {
  switch (spec.kind) {
    case BenchmarkKind::gp_draw: return gen_gp_draw(spec);
    case BenchmarkKind::step_composite: return gen_step_composite(spec);
    case BenchmarkKind::warped_gp: return gen_warped_gp(spec);
  }
  throw ConfigError("unknown benchmark kind");
}

BenchmarkResults run_benchmark(const std::vector<BenchmarkSpec>& specs,
                               const std::vector<BenchmarkModel>& models, int repetitions,
                               bool record_time) {
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (specs.empty() || models.empty()) throw ConfigError("benchmark needs at least one spec and one model");
  for (const auto& s : specs) s.validate();
  for (const auto& m : models) {
    m.config.validate();
    if (m.predict_samples < 1) throw ConfigError("model '" + m.id + "' needs predict_samples >= 1");
  }

  const std::size_t nm = models.size(), nr = static_cast<std::size_t>(repetitions);
  BenchmarkResults out;
  out.rows.resize(specs.size() * nm * nr);
  for (std::size_t si = 0; si < specs.size(); ++si) {
    for (std::size_t r = 0; r < nr; ++r) {
      BenchmarkSpec rep_spec = specs[si];
      rep_spec.seed = specs[si].seed + r;
      const BenchmarkData data = generate(rep_spec);
      for (std::size_t mi = 0; mi < nm; ++mi) {
        const auto start = std::chrono::steady_clock::now();
        const TrainResult fit = fit_model(data.train, models[mi].config, rep_spec.seed);
        const GaussianPrediction p =
            fit.model.predict(data.test.x, models[mi].predict_samples, rep_spec.seed);
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

        BenchmarkRow row;
        row.spec_id = specs[si].id;
        row.model_id = models[mi].id;
        row.rep = static_cast<int>(r);
        row.rmse = eval::rmse(p.mean, data.test.y);
        row.mae = eval::mae_with_se(p.mean, data.test.y).mae;
        const VectorXd zeta = eval::scaled_residuals(p, data.test.y);
        row.zeta_mean = zeta.mean();
        row.zeta_sd = zeta.size() > 1
                          ? std::sqrt((zeta.array() - zeta.mean()).square().sum() / (zeta.size() - 1.0))
                          : 0.0;
        if (record_time) row.wall_ms = ms;
        out.rows[(si * nm + mi) * nr + r] = row;
      }
    }
    for (std::size_t mi = 0; mi < nm; ++mi) {
      std::vector<double> rmse, mae, zm, zs;
      for (std::size_t r = 0; r < nr; ++r) {
        const auto& row = out.rows[(si * nm + mi) * nr + r];
        rmse.push_back(row.rmse);
        mae.push_back(row.mae);
        zm.push_back(row.zeta_mean);
        zs.push_back(row.zeta_sd);
      }
      const double root = std::sqrt(static_cast<double>(nr));
      out.summary.push_back({specs[si].id, models[mi].id, repetitions, mean_of(rmse), sample_sd(rmse) / root,
                             mean_of(mae), sample_sd(mae) / root, mean_of(zm), mean_of(zs)});
    }
  }
  return out;
}

}  // namespace deepgp::synth
