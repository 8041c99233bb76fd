#include "deepgp/dgp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "deepgp/errors.hpp"
#include "deepgp/exact_gp.hpp"
#include "deepgp/inducing.hpp"
#include "deepgp/linalg.hpp"

namespace deepgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kKzzJitter = 1e-6;  // relative to the kernel variance
constexpr double kVarianceFloor = 1e-12;
constexpr double kInitCovScale = 1e-5;
constexpr int kMaxConsecutiveFailures = 50;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t row, std::uint64_t sample) {
  return splitmix(splitmix(splitmix(seed) ^ row) ^ sample);
}

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l + 1) + "."; }

// Standard normal draws for every layer and unit, one stream per row. Within a
// row the draws run layer by layer, unit by unit, so a row's noise does not
// depend on which other rows share the batch.
std::vector<MatrixXd> draw_noise(const DgpModel& model, const std::vector<std::uint64_t>& keys,
                                 std::uint64_t seed, std::uint64_t sample) {
  const auto b = static_cast<Index>(keys.size());
  std::vector<MatrixXd> eps;
  for (const auto& layer : model.layers) eps.emplace_back(b, layer.width());
  for (Index i = 0; i < b; ++i) {
    std::mt19937_64 engine(stream_key(seed, keys[static_cast<std::size_t>(i)], sample));
    std::normal_distribution<double> normal;
    for (auto& e : eps) {
      for (Index u = 0; u < e.cols(); ++u) e(i, u) = normal(engine);
    }
  }
  return eps;
}

struct InducingFactor {
  MatrixXd kzz;  // kernel_matrix(Z, Z), jitter not included
  linalg::CholFactor chol;
};

InducingFactor factor_inducing(const DgpLayer& layer) {
  InducingFactor f;
  f.kzz = kernel_matrix(layer.kernel, layer.inducing, layer.inducing);
  MatrixXd a = f.kzz;
  a.diagonal().array() += kKzzJitter * layer.kernel.variance();
  f.chol = linalg::cholesky(a, linalg::default_jitter(a));
  return f;
}

struct LayerPass {
  MatrixXd kzx;             // m x b
  MatrixXd p;               // L_zz^{-1} K_zx
  std::vector<MatrixXd> t;  // q_sqrt_u^T P, kept for the backward pass
  MatrixXd mean;            // b x width
  MatrixXd var;
};

LayerPass forward(const DgpLayer& layer, const InducingFactor& f, const MatrixXd& x, bool keep) {
  LayerPass pass;
  pass.kzx = kernel_matrix(layer.kernel, layer.inducing, x);
  pass.p = linalg::lower_solve(f.chol, pass.kzx);
  const VectorXd base = kernel_diag(layer.kernel, x) - pass.p.colwise().squaredNorm().transpose();
  pass.mean = pass.p.transpose() * layer.q_mu;
  if (layer.has_mean()) pass.mean.noalias() += x * layer.mean_weights;
  pass.var.resize(x.rows(), layer.width());
  for (Index u = 0; u < layer.width(); ++u) {
    MatrixXd t = layer.q_sqrt[static_cast<std::size_t>(u)].triangularView<Eigen::Lower>().transpose() * pass.p;
    pass.var.col(u) = base + t.colwise().squaredNorm().transpose();
    if (keep) pass.t.push_back(std::move(t));
  }
  return pass;
}

struct LayerGrad {
  double d_log_variance = 0.0;
  VectorXd d_log_lengthscales;
  MatrixXd d_inducing;
  MatrixXd d_q_mu;
  std::vector<MatrixXd> d_q_sqrt;
  MatrixXd d_chol;  // d/d L_zz, only the lower triangle is meaningful

  explicit LayerGrad(const DgpLayer& layer)
      : d_log_lengthscales(VectorXd::Zero(layer.kernel.log_lengthscales.size())),
        d_inducing(MatrixXd::Zero(layer.num_inducing(), layer.input_dims())),
        d_q_mu(MatrixXd::Zero(layer.num_inducing(), layer.width())),
        d_q_sqrt(static_cast<std::size_t>(layer.width()),
                 MatrixXd::Zero(layer.num_inducing(), layer.num_inducing())),
        d_chol(MatrixXd::Zero(layer.num_inducing(), layer.num_inducing())) {}
};

// Pulls (g_mean, g_var) on the layer outputs back onto the layer parameters
// (accumulated into `acc`, the L_zz part deferred) and returns d/d inputs.
MatrixXd backward(const DgpLayer& layer, const InducingFactor& f, const MatrixXd& x,
                  const LayerPass& pass, const MatrixXd& g_mean, const MatrixXd& g_var,
                  LayerGrad& acc) {
  MatrixXd gp = layer.q_mu * g_mean.transpose();
  acc.d_q_mu.noalias() += pass.p * g_mean;

  const VectorXd gv_sum = g_var.rowwise().sum();
  acc.d_log_variance += layer.kernel.variance() * gv_sum.sum();
  gp.noalias() -= 2.0 * (pass.p * gv_sum.asDiagonal());

  for (Index u = 0; u < layer.width(); ++u) {
    const auto k = static_cast<std::size_t>(u);
    const MatrixXd gt = 2.0 * pass.t[k] * g_var.col(u).asDiagonal();
    acc.d_q_sqrt[k].noalias() += pass.p * gt.transpose();
    gp.noalias() += layer.q_sqrt[k].triangularView<Eigen::Lower>() * gt;
  }

  // P = L^{-1} K_zx
  const MatrixXd y = f.chol.lower.triangularView<Eigen::Lower>().transpose().solve(gp);
  acc.d_chol.noalias() -= y * pass.p.transpose();

  auto adj = kernel_backward(layer.kernel, layer.inducing, x, pass.kzx, y);
  acc.d_log_variance += adj.d_log_variance;
  acc.d_log_lengthscales += adj.d_log_lengthscales;
  acc.d_inducing += adj.d_xa;
  if (layer.has_mean()) adj.d_xb.noalias() += g_mean * layer.mean_weights.transpose();
  return adj.d_xb;
}

// KL(q(v) || N(0, I)) summed over the layer's units, which equals
// KL(q(u) || p(u)) under u = L_zz v; subtracts its gradient from `acc` when
// given (acc holds the gradient of the ELBO).
double layer_kl(const DgpLayer& layer, LayerGrad* acc) {
  const auto m = static_cast<double>(layer.num_inducing());
  double kl = 0.0;
  for (Index u = 0; u < layer.width(); ++u) {
    const auto k = static_cast<std::size_t>(u);
    const MatrixXd lower = layer.q_sqrt[k].triangularView<Eigen::Lower>();
    const auto mu = layer.q_mu.col(u);
    kl += 0.5 * (lower.squaredNorm() + mu.squaredNorm() - m -
                 2.0 * lower.diagonal().array().log().sum());
    if (acc) {
      acc->d_q_mu.col(u) -= mu;
      MatrixXd dl = lower;
      dl.diagonal() -= lower.diagonal().cwiseInverse();
      acc->d_q_sqrt[k] -= dl;
    }
  }
  return kl;
}

// Pullback through L = chol(K_zz + jitter I) and the kernel.
void finish_inducing(const DgpLayer& layer, const InducingFactor& f, LayerGrad& acc) {
  const auto l = f.chol.lower.triangularView<Eigen::Lower>();
  MatrixXd phi = l.transpose() * MatrixXd(acc.d_chol.triangularView<Eigen::Lower>());
  phi.triangularView<Eigen::StrictlyUpper>().setZero();
  phi.diagonal() *= 0.5;
  const MatrixXd left = l.transpose().solve(phi);
  const MatrixXd g_kzz = l.transpose().solve(left.transpose()).transpose();
  const auto adj = kernel_backward(layer.kernel, layer.inducing, layer.inducing, f.kzz, g_kzz);
  acc.d_log_variance += adj.d_log_variance + kKzzJitter * layer.kernel.variance() * g_kzz.trace();
  acc.d_log_lengthscales += adj.d_log_lengthscales;
  acc.d_inducing += adj.d_xa + adj.d_xb;
}

std::vector<std::uint64_t> default_keys(Index n) {
  std::vector<std::uint64_t> keys(static_cast<std::size_t>(n));
  std::iota(keys.begin(), keys.end(), std::uint64_t{0});
  return keys;
}

void check_inputs(const DgpModel& model, const MatrixXd& x) {
  if (x.cols() != model.input_dims()) {
    throw DimensionMismatch("model expects " + std::to_string(model.input_dims()) +
                            " input columns, got " + std::to_string(x.cols()));
  }
}

MatrixXd sample_layer(const LayerPass& pass, const MatrixXd& eps) {
  return pass.mean + eps.cwiseProduct(pass.var.cwiseMax(0.0).cwiseSqrt());
}

// Linear map used as the hidden-layer mean function, D_in x D_out.
MatrixXd mean_projection(const MatrixXd& x, Index d_out) {
  const Index d_in = x.cols();
  if (d_in == d_out) return MatrixXd::Identity(d_in, d_out);
  if (d_in > d_out && x.rows() >= d_out) {
    data::Dataset d;
    d.x = x;
    d.y = VectorXd::Zero(x.rows());
    return data::fit_pca(d, d_out).basis;
  }
  return MatrixXd::Identity(d_in, d_out);
}

}  // namespace

// ------------------------------------------------------------------ model

double DgpModel::noise_variance() const { return std::exp(log_noise); }

void DgpModel::validate() const {
  if (layers.empty()) throw ArchitectureInvalid("a deep GP needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::string where = "layer " + std::to_string(l + 1);
    const Index m = layer.num_inducing();
    if (m < 1) throw ArchitectureInvalid(where + " has no inducing points");
    if (layer.width() < 1) throw ArchitectureInvalid(where + " has zero width");
    if (layer.q_mu.rows() != m) throw DimensionMismatch(where + ": q_mu rows differ from m");
    if (static_cast<Index>(layer.q_sqrt.size()) != layer.width()) {
      throw DimensionMismatch(where + ": one q_sqrt factor per unit required");
    }
    for (const auto& s : layer.q_sqrt) {
      if (s.rows() != m || s.cols() != m) throw DimensionMismatch(where + ": q_sqrt must be m x m");
    }
    const Index ls = layer.kernel.log_lengthscales.size();
    if (ls != 1 && ls != layer.input_dims()) {
      throw DimensionMismatch(where + ": lengthscale count differs from input width");
    }
    if (layer.has_mean() &&
        (layer.mean_weights.rows() != layer.input_dims() || layer.mean_weights.cols() != layer.width())) {
      throw DimensionMismatch(where + ": mean weights must be D_in x width");
    }
    if (l > 0 && layer.input_dims() != layers[l - 1].width()) {
      throw ArchitectureInvalid(where + " input width " + std::to_string(layer.input_dims()) +
                                " does not match the previous layer width " +
                                std::to_string(layers[l - 1].width()));
    }
  }
  if (layers.back().width() != 1) throw ArchitectureInvalid("the final layer must have width 1");
}

opt::ParamLayout DgpModel::layout() const {
  opt::ParamLayout out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::string p = layer_prefix(l);
    out.add_dense(p + "log_variance", 1, 1);
    out.add_dense(p + "log_lengthscales", layer.kernel.log_lengthscales.size(), 1);
    out.add_dense(p + "inducing", layer.num_inducing(), layer.input_dims());
    out.add_dense(p + "q_mu", layer.num_inducing(), layer.width());
    out.add_lower_factors(p + "q_sqrt", layer.num_inducing(), layer.width());
  }
  out.add_dense("log_noise", 1, 1);
  return out;
}

VectorXd DgpModel::parameters() const {
  opt::ParamVector pv(layout());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::string p = layer_prefix(l);
    pv.set_scalar(p + "log_variance", layer.kernel.log_variance);
    pv.set_matrix(p + "log_lengthscales", layer.kernel.log_lengthscales);
    pv.set_matrix(p + "inducing", layer.inducing);
    pv.set_matrix(p + "q_mu", layer.q_mu);
    for (Index u = 0; u < layer.width(); ++u) {
      pv.set_lower_factor(p + "q_sqrt", u, layer.q_sqrt[static_cast<std::size_t>(u)]);
    }
  }
  pv.set_scalar("log_noise", log_noise);
  return pv.values();
}

void DgpModel::set_parameters(const VectorXd& theta) {
  auto l = layout();
  if (theta.size() != l.size()) throw DimensionMismatch("deep GP parameter vector size");
  const opt::ParamVector pv(std::move(l), theta);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& layer = layers[i];
    const std::string p = layer_prefix(i);
    layer.kernel.log_variance = pv.scalar(p + "log_variance");
    layer.kernel.log_lengthscales = pv.matrix(p + "log_lengthscales").col(0);
    layer.inducing = pv.matrix(p + "inducing");
    layer.q_mu = pv.matrix(p + "q_mu");
    for (Index u = 0; u < layer.width(); ++u) {
      layer.q_sqrt[static_cast<std::size_t>(u)] = pv.lower_factor(p + "q_sqrt", u);
    }
  }
  log_noise = pv.scalar("log_noise");
}

// -------------------------------------------------------------- marginals

MatrixXd inducing_cholesky(const DgpLayer& layer) { return factor_inducing(layer).chol.lower; }

VariationalMoments variational_moments(const DgpLayer& layer, Index unit) {
  if (unit < 0 || unit >= layer.width()) throw DimensionMismatch("unit index out of range");
  const MatrixXd l = inducing_cholesky(layer);
  const MatrixXd ls = l * layer.q_sqrt[static_cast<std::size_t>(unit)].triangularView<Eigen::Lower>();
  return VariationalMoments{l * layer.q_mu.col(unit), ls * ls.transpose()};
}

LayerMarginal layer_marginal(const DgpLayer& layer, const MatrixXd& inputs) {
  if (inputs.cols() != layer.input_dims()) {
    throw DimensionMismatch("layer expects " + std::to_string(layer.input_dims()) +
                            " input columns, got " + std::to_string(inputs.cols()));
  }
  if (!inputs.allFinite()) throw DimensionMismatch("layer inputs must be finite");
  const auto pass = forward(layer, factor_inducing(layer), inputs, false);
  return LayerMarginal{pass.mean, pass.var.cwiseMax(0.0)};
}

MatrixXd sample_through(const DgpModel& model, const MatrixXd& inputs, std::uint64_t seed,
                        Index upto_layer) {
  model.validate();
  check_inputs(model, inputs);
  if (upto_layer < 1 || upto_layer > model.depth()) {
    throw ConfigError("upto_layer must lie in [1, " + std::to_string(model.depth()) + "]");
  }
  const auto eps = draw_noise(model, default_keys(inputs.rows()), seed, 0);
  MatrixXd f = inputs;
  for (Index l = 0; l < upto_layer; ++l) {
    const auto& layer = model.layers[static_cast<std::size_t>(l)];
    f = sample_layer(forward(layer, factor_inducing(layer), f, false), eps[static_cast<std::size_t>(l)]);
  }
  return f;
}

// ------------------------------------------------------------------- ELBO

ElboResult elbo(const DgpModel& model, const data::Dataset& batch, Index n_total, int mc_samples,
                std::uint64_t seed, bool with_gradient) {
  model.validate();
  if (batch.size() < 1) throw EmptyBatch("ELBO needs a non-empty batch");
  if (mc_samples < 1) throw ConfigError("mc_samples must be at least 1");
  if (batch.y.size() != batch.size()) throw LengthMismatch("batch targets and rows differ in count");
  check_inputs(model, batch.x);

  std::vector<std::uint64_t> keys;
  if (batch.row_ids.empty()) {
    keys = default_keys(batch.size());
  } else {
    keys.assign(batch.row_ids.begin(), batch.row_ids.end());
  }

  const std::size_t depth = model.layers.size();
  std::vector<InducingFactor> factors;
  std::vector<LayerGrad> grads;
  for (const auto& layer : model.layers) {
    factors.push_back(factor_inducing(layer));
    if (with_gradient) grads.emplace_back(layer);
  }

  const double noise = model.noise_variance();
  const double scale = static_cast<double>(n_total) /
                       (static_cast<double>(batch.size()) * static_cast<double>(mc_samples));
  const auto b = static_cast<double>(batch.size());
  double likelihood = 0.0;
  double d_log_noise = 0.0;

  for (int s = 0; s < mc_samples; ++s) {
    const auto eps = draw_noise(model, keys, seed, static_cast<std::uint64_t>(s));
    std::vector<MatrixXd> inputs(depth);
    std::vector<LayerPass> passes(depth);
    inputs[0] = batch.x;
    for (std::size_t l = 0; l < depth; ++l) {
      passes[l] = forward(model.layers[l], factors[l], inputs[l], with_gradient);
      if (l + 1 < depth) inputs[l + 1] = sample_layer(passes[l], eps[l]);
    }
    const VectorXd mu = passes.back().mean.col(0);
    const VectorXd var = passes.back().var.col(0);
    const VectorXd r = batch.y - mu;
    const double sq = (r.array().square() + var.array()).sum();
    likelihood += scale * (-0.5 * b * (kLog2Pi + model.log_noise) - 0.5 * sq / noise);

    if (!with_gradient) continue;
    d_log_noise += scale * (-0.5 * b + 0.5 * sq / noise);
    MatrixXd g_mean = (scale / noise) * r;
    MatrixXd g_var = MatrixXd::Constant(batch.size(), 1, -0.5 * scale / noise);
    for (std::size_t l = depth; l-- > 0;) {
      MatrixXd dx = backward(model.layers[l], factors[l], inputs[l], passes[l], g_mean, g_var, grads[l]);
      if (l == 0) break;
      const MatrixXd& v = passes[l - 1].var;
      g_var = MatrixXd::Zero(v.rows(), v.cols());
      for (Index j = 0; j < v.cols(); ++j) {
        for (Index i = 0; i < v.rows(); ++i) {
          if (v(i, j) > kVarianceFloor) g_var(i, j) = 0.5 * dx(i, j) * eps[l - 1](i, j) / std::sqrt(v(i, j));
        }
      }
      g_mean = std::move(dx);
    }
  }

  ElboResult out;
  out.likelihood = likelihood;
  for (std::size_t l = 0; l < depth; ++l) {
    out.kl += layer_kl(model.layers[l], with_gradient ? &grads[l] : nullptr);
  }
  out.value = out.likelihood - out.kl;
  if (!with_gradient) return out;

  const auto layout = model.layout();
  out.gradient = VectorXd::Zero(layout.size());
  for (std::size_t l = 0; l < depth; ++l) {
    const auto& layer = model.layers[l];
    auto& g = grads[l];
    finish_inducing(layer, factors[l], g);
    const std::string p = layer_prefix(l);
    out.gradient(layout.segment(p + "log_variance").offset) = g.d_log_variance;
    opt::ParamVector::pack_dense_grad(layout.segment(p + "log_lengthscales"), g.d_log_lengthscales, out.gradient);
    opt::ParamVector::pack_dense_grad(layout.segment(p + "inducing"), g.d_inducing, out.gradient);
    opt::ParamVector::pack_dense_grad(layout.segment(p + "q_mu"), g.d_q_mu, out.gradient);
    const auto& seg = layout.segment(p + "q_sqrt");
    for (Index u = 0; u < layer.width(); ++u) {
      const auto k = static_cast<std::size_t>(u);
      opt::ParamVector::pack_lower_factor_grad(seg, u, g.d_q_sqrt[k], layer.q_sqrt[k], out.gradient);
    }
  }
  out.gradient(layout.segment("log_noise").offset) = d_log_noise;
  return out;
}

// ------------------------------------------------------------- training

void DgpArchitecture::validate() const {
  if (layers < 1) throw ArchitectureInvalid("layers must be at least 1");
  if (layers > 1 && hidden_width < 1) throw ArchitectureInvalid("hidden_width must be at least 1");
  if (inducing < 1) throw ArchitectureInvalid("inducing must be at least 1");
}

DgpModel dgp_init(const data::Dataset& d, const DgpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  if (d.size() < 1) throw TooFewPoints("deep GP needs at least one training point");
  if (arch.inducing > d.size()) {
    throw TooFewPoints("inducing=" + std::to_string(arch.inducing) + " exceeds n=" +
                       std::to_string(d.size()));
  }
  DgpModel model;
  MatrixXd z = init_inducing(d.x, arch.inducing, seed);
  MatrixXd path = d.x;
  for (Index l = 0; l < arch.layers; ++l) {
    const bool last = l + 1 == arch.layers;
    const Index width = last ? 1 : arch.hidden_width;
    DgpLayer layer;
    layer.inducing = z;
    double ls = median_pairwise_distance(z);
    if (!(ls > 0.0) || !std::isfinite(ls)) ls = 1.0;
    layer.kernel = arch.ard ? KernelParams::ard(1.0, VectorXd::Constant(z.cols(), ls))
                            : KernelParams::isotropic(1.0, ls);
    layer.q_mu = MatrixXd::Zero(z.rows(), width);
    layer.q_sqrt.assign(static_cast<std::size_t>(width),
                        std::sqrt(kInitCovScale) * MatrixXd::Identity(z.rows(), z.rows()));
    if (!last) {
      const MatrixXd w = mean_projection(path, width);
      if (!arch.zero_mean) layer.mean_weights = w;
      z = z * w;
      path = path * w;
    }
    model.layers.push_back(std::move(layer));
  }
  model.log_noise = std::log(0.01);
  model.validate();
  return model;
}

DgpFitResult dgp_train(DgpModel init, const data::Dataset& d, const DgpTrainOptions& options) {
  const auto& cfg = options.train;
  cfg.validate();
  init.validate();
  if (d.size() < 1) throw EmptyBatch("deep GP training needs at least one row");
  if (d.y.size() != d.size()) throw LengthMismatch("targets and rows differ in count");
  check_inputs(init, d.x);

  DgpFitResult result;
  result.model = std::move(init);
  DgpModel& model = result.model;
  const auto layout = model.layout();
  VectorXd theta = model.parameters();

  VectorXd mask = VectorXd::Ones(theta.size());
  for (const auto& seg : layout.segments()) {
    const auto ends_with = [&](const std::string& suffix) {
      return seg.name.size() >= suffix.size() &&
             seg.name.compare(seg.name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    const bool kernel = ends_with("log_variance") || ends_with("log_lengthscales");
    const bool frozen = (kernel && !options.optimize_kernel) ||
                        (ends_with(".inducing") && !options.optimize_inducing) ||
                        (seg.name == "log_noise" && !options.optimize_noise);
    if (frozen) mask.segment(seg.offset, seg.size).setZero();
  }

  const Index n = d.size();
  const Index b = std::min(cfg.batch_size, n);
  std::mt19937_64 shuffler(cfg.seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::size_t cursor = order.size();

  opt::AdamState state(theta.size());
  const auto start = std::chrono::steady_clock::now();
  int consecutive = 0;
  for (int step = 1; step <= cfg.max_steps; ++step) {
    if (cursor >= order.size()) {
      std::shuffle(order.begin(), order.end(), shuffler);
      cursor = 0;
    }
    const std::size_t end = std::min(order.size(), cursor + static_cast<std::size_t>(b));
    const std::vector<Index> rows(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
    cursor = end;
    data::Dataset batch = d.subset(rows);
    if (d.row_ids.empty()) batch.row_ids.assign(rows.begin(), rows.end());

    bool ok = true;
    ElboResult r;
    try {
      r = elbo(model, batch, n, cfg.mc_samples, stream_key(cfg.seed, static_cast<std::uint64_t>(step), 1));
      ok = std::isfinite(r.value) && adam_step(state, theta, -r.gradient.cwiseProduct(mask), cfg);
    } catch (const NotPositiveDefinite&) {
      ok = false;
    }
    if (!ok) {
      ++result.skipped_steps;
      if (++consecutive >= kMaxConsecutiveFailures) {
        throw NonFiniteGradient("deep GP training failed on " + std::to_string(consecutive) +
                                " consecutive steps (last step " + std::to_string(step) + ")");
      }
      continue;
    }
    consecutive = 0;
    model.set_parameters(theta);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.trace.push_back(TraceRow{step, r.value, ms});
  }
  return result;
}

DgpFitResult dgp_fit(const data::Dataset& d, const DgpArchitecture& arch, const DgpTrainOptions& options) {
  DgpModel init = dgp_init(d, arch, options.train.seed);
  init.log_noise = std::log(options.initial_noise);
  return dgp_train(std::move(init), d, options);
}

// ------------------------------------------------------------ prediction

MixturePrediction dgp_predict(const DgpModel& model, const MatrixXd& xs, int s_samples,
                              std::uint64_t seed, bool observation_space) {
  model.validate();
  check_inputs(model, xs);
  if (s_samples < 1) throw ConfigError("prediction needs at least one sample");

  const Index n = xs.rows();
  const std::size_t depth = model.layers.size();
  std::vector<InducingFactor> factors;
  for (const auto& layer : model.layers) factors.push_back(factor_inducing(layer));

  MixturePrediction out;
  out.component_mean.resize(n, s_samples);
  out.component_variance.resize(n, s_samples);
  if (depth == 1) {
    const auto pass = forward(model.layers[0], factors[0], xs, false);
    const VectorXd var = pass.var.col(0).cwiseMax(0.0);
    out.component_mean = pass.mean.col(0).replicate(1, s_samples);
    out.component_variance = var.replicate(1, s_samples);
    out.collapsed.mean = pass.mean.col(0);
    out.collapsed.variance = var;
  } else {
    const auto keys = default_keys(n);
    for (int s = 0; s < s_samples; ++s) {
      const auto eps = draw_noise(model, keys, seed, static_cast<std::uint64_t>(s));
      MatrixXd f = xs;
      for (std::size_t l = 0; l + 1 < depth; ++l) {
        f = sample_layer(forward(model.layers[l], factors[l], f, false), eps[l]);
      }
      const auto pass = forward(model.layers.back(), factors.back(), f, false);
      out.component_mean.col(s) = pass.mean.col(0);
      out.component_variance.col(s) = pass.var.col(0).cwiseMax(0.0);
    }
    out.collapsed.mean = out.component_mean.rowwise().mean();
    const MatrixXd spread = out.component_mean.colwise() - out.collapsed.mean;
    out.collapsed.variance = out.component_variance.rowwise().mean() +
                             spread.array().square().matrix().rowwise().mean();
  }
  if (observation_space) out.collapsed.variance.array() += model.noise_variance();
  return out;
}

}  // namespace deepgp
