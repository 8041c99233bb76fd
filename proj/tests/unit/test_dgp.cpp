#include <doctest.h>

#include <cmath>
#include <random>

#include "deepgp/dgp.hpp"
#include "deepgp/errors.hpp"
#include "deepgp/exact_gp.hpp"
#include "test_util.hpp"

using namespace deepgp;
using testutil::naive_rbf;
using testutil::random_matrix;

namespace {

// The layer treats u as f(Z) observed with a jitter of 1e-6 times the kernel
// variance; the oracles below build the same joint Gaussian explicitly.
constexpr double kJitter = 1e-6;

MatrixXd jittered_kzz(double variance, double ls, const MatrixXd& z) {
  MatrixXd k = naive_rbf(variance, VectorXd::Constant(1, ls), z, z);
  k.diagonal().array() += kJitter * variance;
  return k;
}

MatrixXd oracle_chol(double variance, double ls, const MatrixXd& z) {
  return jittered_kzz(variance, ls, z).llt().matrixL();
}

MatrixXd random_lower(Index m, std::uint64_t seed, double scale) {
  MatrixXd l = random_matrix(m, m, seed, -scale, scale).triangularView<Eigen::Lower>();
  l.diagonal() = l.diagonal().cwiseAbs().array() + 0.2 * scale;
  return l;
}

DgpLayer random_layer(Index m, Index d_in, Index width, bool with_mean, std::uint64_t seed) {
  DgpLayer layer;
  layer.kernel = KernelParams::isotropic(1.3, 0.8);
  layer.inducing = random_matrix(m, d_in, seed, -1.5, 1.5);
  layer.q_mu = random_matrix(m, width, seed + 1);
  for (Index u = 0; u < width; ++u) layer.q_sqrt.push_back(random_lower(m, seed + 10 + static_cast<std::uint64_t>(u), 0.4));
  if (with_mean) layer.mean_weights = random_matrix(d_in, width, seed + 2);
  return layer;
}

DgpModel random_model(const std::vector<Index>& widths, Index d_in, Index m, std::uint64_t seed) {
  DgpModel model;
  Index din = d_in;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const bool last = l + 1 == widths.size();
    model.layers.push_back(random_layer(m, din, widths[l], !last, seed + 100 * l));
    din = widths[l];
  }
  model.log_noise = std::log(0.15);
  return model;
}

data::Dataset make_dataset(MatrixXd x, VectorXd y) {
  data::Dataset d;
  d.x = std::move(x);
  d.y = std::move(y);
  return d;
}

double rmse(const VectorXd& a, const VectorXd& b) {
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

}  // namespace

TEST_CASE("layer_marginal with q(u) = p(u) returns the prior") {
  DgpLayer layer;
  layer.kernel = KernelParams::isotropic(1.7, 0.6);
  layer.inducing = random_matrix(6, 2, 1, -2.0, 2.0);
  layer.q_mu = MatrixXd::Zero(6, 1);
  layer.q_sqrt.push_back(MatrixXd::Identity(6, 6));
  const auto q = variational_moments(layer, 0);
  CHECK((q.covariance - jittered_kzz(1.7, 0.6, layer.inducing)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(q.mean.isZero());
  const auto marg = layer_marginal(layer, random_matrix(20, 2, 2, -3.0, 3.0));
  CHECK(marg.mean.cwiseAbs().maxCoeff() < 1e-12);
  CHECK((marg.variance.array() - 1.7).abs().maxCoeff() < 1e-10);
}

TEST_CASE("layer_marginal with S -> 0 interpolates at inducing locations") {
  DgpLayer layer;
  layer.kernel = KernelParams::isotropic(1.0, 0.5);
  MatrixXd z(4, 2);
  z << 0, 0, 2, 0, 0, 2, 2, 2;
  layer.inducing = z;
  const MatrixXd m = random_matrix(4, 2, 3);
  layer.q_mu = oracle_chol(1.0, 0.5, z).triangularView<Eigen::Lower>().solve(m);
  layer.q_sqrt.assign(2, 1e-9 * MatrixXd::Identity(4, 4));
  layer.mean_weights = MatrixXd::Identity(2, 2);
  const auto marg = layer_marginal(layer, z);
  const MatrixXd expected = z + m;
  CHECK((marg.mean - expected).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(marg.variance.maxCoeff() < 1e-5);
}

TEST_CASE("layer_marginal matches dense conditioning of the joint Gaussian, b=40, m=8") {
  const Index b = 40, m = 8;
  const DgpLayer layer = random_layer(m, 2, 3, true, 4);
  const MatrixXd x = random_matrix(b, 2, 5, -2.0, 2.0);
  const auto marg = layer_marginal(layer, x);

  // Joint of (f(x), u) with cov [[Kxx, Kxz], [Kzx, Kzz + jI]]; integrate p(f|u) q(u).
  const VectorXd ls = VectorXd::Constant(1, 0.8);
  const MatrixXd kxx = naive_rbf(1.3, ls, x, x);
  const MatrixXd kxz = naive_rbf(1.3, ls, x, layer.inducing);
  const MatrixXd kzz = jittered_kzz(1.3, 0.8, layer.inducing);
  const MatrixXd lz = oracle_chol(1.3, 0.8, layer.inducing);
  const Eigen::FullPivLU<MatrixXd> lu(kzz);
  const MatrixXd gain = lu.solve(kxz.transpose()).transpose();  // Kxz Kzz^{-1}
  const MatrixXd cond_cov = kxx - gain * kxz.transpose();
  for (Index u = 0; u < 3; ++u) {
    const MatrixXd ls_u = lz * layer.q_sqrt[static_cast<std::size_t>(u)];
    const MatrixXd s = ls_u * ls_u.transpose();
    const VectorXd mean = x * layer.mean_weights.col(u) + gain * (lz * layer.q_mu.col(u));
    const auto q = variational_moments(layer, u);
    CHECK((q.covariance - s).cwiseAbs().maxCoeff() < 1e-10);
    const MatrixXd cov = cond_cov + gain * s * gain.transpose();
    CHECK((marg.mean.col(u) - mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((marg.variance.col(u) - cov.diagonal()).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("sample_through with vanishing variance follows the mean path for any seed") {
  DgpModel model = random_model({3, 1}, 2, 5, 6);
  for (auto& layer : model.layers) {
    layer.kernel.log_variance = std::log(1e-14);
    for (auto& s : layer.q_sqrt) s = 1e-9 * MatrixXd::Identity(5, 5);
  }
  const MatrixXd x = random_matrix(10, 2, 7);
  const MatrixXd h = layer_marginal(model.layers[0], x).mean;
  const MatrixXd path = layer_marginal(model.layers[1], h).mean;
  const MatrixXd a = sample_through(model, x, 1, 2);
  const MatrixXd b = sample_through(model, x, 999, 2);
  CHECK((a - path).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((b - path).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("sample_through is bitwise reproducible and per-row") {
  const DgpModel model = random_model({3, 2, 1}, 2, 5, 8);
  const MatrixXd x = random_matrix(12, 2, 9);
  const MatrixXd a = sample_through(model, x, 42, 3);
  CHECK(a == sample_through(model, x, 42, 3));
  CHECK(a != sample_through(model, x, 43, 3));
  // A row's sample depends only on its own inputs and position.
  MatrixXd changed = x;
  changed.row(5).setConstant(0.3);
  const MatrixXd c = sample_through(model, changed, 42, 3);
  for (Index i = 0; i < 12; ++i) {
    if (i != 5) CHECK((a.row(i) - c.row(i)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(sample_through(model, x, 42, 0), ConfigError);
  CHECK_THROWS_AS(sample_through(model, x, 42, 4), ConfigError);
}

TEST_CASE("Monte Carlo moments of sample_through match layer_marginal") {
  const DgpModel model = random_model({2, 1}, 2, 6, 10);
  const Index n = 10000;
  const MatrixXd point = random_matrix(1, 2, 11);
  const MatrixXd x = point.replicate(n, 1);
  const MatrixXd draws = sample_through(model, x, 12, 1);
  const auto marg = layer_marginal(model.layers[0], point);
  for (Index u = 0; u < 2; ++u) {
    const double mean = draws.col(u).mean();
    const double var = (draws.col(u).array() - mean).square().sum() / static_cast<double>(n - 1);
    const double v = marg.variance(0, u);
    CHECK(std::abs(mean - marg.mean(0, u)) < 3.0 * std::sqrt(v / static_cast<double>(n)));
    CHECK(std::abs(var - v) < 3.0 * v * std::sqrt(2.0 / static_cast<double>(n - 1)));
  }
}

TEST_CASE("KL vanishes when q(u) equals the prior") {
  DgpModel model;
  DgpLayer layer;
  layer.kernel = KernelParams::isotropic(0.9, 0.7);
  layer.inducing = random_matrix(5, 1, 13, -2.0, 2.0);
  layer.q_mu = MatrixXd::Zero(5, 1);
  layer.q_sqrt.push_back(MatrixXd::Identity(5, 5));
  model.layers.push_back(layer);
  const auto d = make_dataset(random_matrix(3, 1, 14), VectorXd::Zero(3));
  CHECK(std::abs(elbo(model, d, 3, 1, 0, false).kl) < 1e-9);

  // Shared covariance, shifted mean: KL = 0.5 mu^T K^{-1} mu.
  const VectorXd mu = random_matrix(5, 1, 15);
  model.layers[0].q_mu.col(0) = oracle_chol(0.9, 0.7, layer.inducing).triangularView<Eigen::Lower>().solve(mu);
  const MatrixXd k = jittered_kzz(0.9, 0.7, layer.inducing);
  const double expected = 0.5 * mu.dot(Eigen::FullPivLU<MatrixXd>(k).solve(mu));
  CHECK(elbo(model, d, 3, 1, 0, false).kl == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("likelihood term of an L=1 model matches the closed form") {
  const DgpModel model = random_model({1}, 2, 4, 16);
  const auto d = make_dataset(random_matrix(7, 2, 17), testutil::random_normal(7, 18));
  const auto marg = layer_marginal(model.layers[0], d.x);
  const double noise = std::exp(model.log_noise);
  double expected = 0.0;
  for (Index i = 0; i < 7; ++i) {
    const double r = d.y(i) - marg.mean(i, 0);
    expected += -0.5 * std::log(2.0 * M_PI * noise) - (r * r + marg.variance(i, 0)) / (2.0 * noise);
  }
  const auto e = elbo(model, d, 70, 3, 5, false);
  CHECK(e.likelihood == doctest::Approx(10.0 * expected).epsilon(1e-10));
  CHECK(e.value == doctest::Approx(e.likelihood - e.kl).epsilon(1e-14));
}

TEST_CASE("ELBO gradients match finite differences for L = 1 and L = 2") {
  for (const auto& widths : {std::vector<Index>{1}, std::vector<Index>{2, 1}}) {
    const DgpModel model = random_model(widths, 2, 5, 20);
    const auto d = make_dataset(random_matrix(30, 2, 21, -1.5, 1.5), testutil::random_normal(30, 22));
    const auto layout = model.layout();
    const opt::Objective f = [&](const VectorXd& theta, VectorXd* grad) {
      DgpModel probe = model;
      probe.set_parameters(theta);
      const auto r = elbo(probe, d, 100, 2, 77, grad != nullptr);
      if (grad) *grad = r.gradient;
      return r.value;
    };
    const auto report = opt::check_gradients(f, model.parameters(), 1e-5, 1e-3, &layout);
    MESSAGE("L=" << widths.size() << " max rel error " << report.max_rel_error);
    for (Index i : report.failing) {
      const auto& c = report.coordinates[static_cast<std::size_t>(i)];
      MESSAGE(c.group << "[" << c.index << "] analytic " << c.analytic << " numeric " << c.numeric);
    }
    CHECK(report.passed());
  }
}

TEST_CASE("batch ELBO factorizes over points") {
  const DgpModel model = random_model({3, 1}, 2, 5, 23);
  auto batch = make_dataset(random_matrix(6, 2, 24), testutil::random_normal(6, 25));
  batch.row_ids = {11, 4, 27, 3, 8, 19};
  const auto whole = elbo(model, batch, 6, 2, 31, false);
  double sum = 0.0;
  for (Index i = 0; i < 6; ++i) {
    const auto single = batch.subset({i});
    sum += elbo(model, single, 1, 2, 31, false).likelihood;
  }
  CHECK(whole.likelihood == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("ELBO after optimizing q with Z = X is a tight lower bound on log p(y)") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto d = make_dataset(random_matrix(15, 1, seed, -2.0, 2.0),
                                (random_matrix(15, 1, seed, -2.0, 2.0).array().sin()).matrix() +
                                    0.1 * testutil::random_normal(15, seed + 50));
    const ExactGp exact = ExactGp::fit(d);
    const double log_evidence = -exact.nll().value;

    DgpArchitecture arch;
    arch.inducing = 15;
    DgpModel init = dgp_init(d, arch, seed);
    init.layers[0].kernel = exact.kernel();
    init.layers[0].inducing = d.x;
    init.log_noise = exact.log_noise();
    DgpTrainOptions opts;
    opts.optimize_kernel = opts.optimize_inducing = opts.optimize_noise = false;
    opts.train.batch_size = 15;
    opts.train.learning_rate = 0.05;
    opts.train.max_steps = 3000;
    const auto fit = dgp_train(init, d, opts);
    const double bound = elbo(fit.model, d, 15, 1, 0, false).value;
    MESSAGE("log p(y) " << log_evidence << ", ELBO " << bound);
    CHECK(bound <= log_evidence + 1e-6);
    CHECK(log_evidence - bound < 0.1);
  }
}

TEST_CASE("ELBO step cost grows at most linearly in the batch size") {
  const DgpModel model = random_model({5, 1}, 3, 30, 26);
  const auto small = make_dataset(random_matrix(512, 3, 27), testutil::random_normal(512, 28));
  const auto large = make_dataset(random_matrix(1024, 3, 27), testutil::random_normal(1024, 28));
  const double ratio =
      testutil::median_time_ratio([&] { volatile double v = elbo(model, small, 10000, 1, 1).value; (void)v; },
                                  [&] { volatile double v = elbo(model, large, 10000, 1, 1).value; (void)v; });
  MESSAGE("ELBO step time ratio " << ratio);
  CHECK(ratio <= 2.5);
}

TEST_CASE("dgp_predict: one sample is a single Gaussian") {
  const DgpModel model = random_model({3, 1}, 2, 5, 29);
  const MatrixXd xs = random_matrix(8, 2, 30);
  const auto p = dgp_predict(model, xs, 1, 4);
  CHECK(p.collapsed.mean == p.component_mean.col(0));
  CHECK(p.collapsed.variance == p.component_variance.col(0));
}

TEST_CASE("dgp_predict: L = 1 components are identical and match layer_marginal") {
  const DgpModel model = random_model({1}, 2, 5, 31);
  const MatrixXd xs = random_matrix(8, 2, 32);
  const auto p = dgp_predict(model, xs, 7, 4);
  const auto marg = layer_marginal(model.layers[0], xs);
  CHECK(p.collapsed.mean == marg.mean.col(0));
  CHECK(p.collapsed.variance == marg.variance.col(0));
  for (Index s = 1; s < 7; ++s) CHECK(p.component_mean.col(s) == p.component_mean.col(0));
  const auto q = dgp_predict(model, xs, 1, 123);
  CHECK(q.collapsed.mean == p.collapsed.mean);
  const auto obs = dgp_predict(model, xs, 1, 4, true);
  CHECK(((obs.collapsed.variance - p.collapsed.variance).array() - std::exp(model.log_noise)).abs().maxCoeff() <
        1e-12);
}

TEST_CASE("dgp_predict collapsed moments match sampling the mixture") {
  const DgpModel model = random_model({3, 1}, 2, 5, 33);
  const MatrixXd xs = random_matrix(3, 2, 34);
  const int s_samples = 50;
  const auto p = dgp_predict(model, xs, s_samples, 9);
  CHECK((p.collapsed.variance.array() >= 0.0).all());

  std::mt19937_64 rng(35);
  std::uniform_int_distribution<int> pick(0, s_samples - 1);
  std::normal_distribution<double> normal;
  const int draws = 100000;
  for (Index i = 0; i < 3; ++i) {
    double sum = 0.0, sum_sq = 0.0;
    for (int k = 0; k < draws; ++k) {
      const int s = pick(rng);
      const double f = p.component_mean(i, s) + std::sqrt(p.component_variance(i, s)) * normal(rng);
      sum += f;
      sum_sq += f * f;
    }
    const double mean = sum / draws;
    const double var = sum_sq / draws - mean * mean;
    const double v = p.collapsed.variance(i);
    CHECK(std::abs(mean - p.collapsed.mean(i)) < 3.0 * std::sqrt(v / draws));
    // Variance of the sample variance uses the mixture's fourth central moment.
    double m4 = 0.0;
    for (int s = 0; s < s_samples; ++s) {
      const double d = p.component_mean(i, s) - p.collapsed.mean(i);
      const double c = p.component_variance(i, s);
      m4 += d * d * d * d + 6.0 * d * d * c + 3.0 * c * c;
    }
    m4 /= s_samples;
    CHECK(std::abs(var - v) < 3.0 * std::sqrt((m4 - v * v) / draws));
  }
}

TEST_CASE("dgp_predict is reproducible under a fixed seed") {
  const DgpModel model = random_model({3, 3, 1}, 2, 5, 36);
  const MatrixXd xs = random_matrix(20, 2, 37);
  const auto a = dgp_predict(model, xs, 30, 5);
  const auto b = dgp_predict(model, xs, 30, 5);
  CHECK(a.collapsed.mean == b.collapsed.mean);
  CHECK(a.collapsed.variance == b.collapsed.variance);
  CHECK_THROWS_AS(dgp_predict(model, random_matrix(2, 3, 1), 5, 0), DimensionMismatch);
}

TEST_CASE("parameters round-trip and the layout names every group") {
  const DgpModel model = random_model({2, 1}, 3, 4, 38);
  DgpModel copy = model;
  copy.set_parameters(model.parameters());
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK((copy.layers[l].q_sqrt[0] - model.layers[l].q_sqrt[0]).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(copy.layers[l].inducing == model.layers[l].inducing);
  }
  const auto layout = model.layout();
  for (const char* g : {"layer1.log_variance", "layer1.log_lengthscales", "layer1.inducing", "layer1.q_mu",
                        "layer1.q_sqrt", "layer2.q_sqrt", "log_noise"}) {
    CHECK(layout.contains(g));
  }
}

TEST_CASE("architecture validation") {
  DgpModel model = random_model({2, 1}, 3, 4, 39);
  model.layers[1].inducing = random_matrix(4, 3, 1);
  CHECK_THROWS_AS(model.validate(), ArchitectureInvalid);
  DgpModel wide = random_model({2, 2}, 3, 4, 40);
  CHECK_THROWS_AS(wide.validate(), ArchitectureInvalid);
  CHECK_THROWS_AS(DgpModel{}.validate(), ArchitectureInvalid);
  DgpArchitecture arch;
  arch.layers = 0;
  CHECK_THROWS_AS(arch.validate(), ArchitectureInvalid);
  const auto d = make_dataset(random_matrix(5, 2, 1), VectorXd::Zero(5));
  CHECK_THROWS_AS(elbo(random_model({1}, 2, 3, 1), d.subset({}), 1, 1, 0), EmptyBatch);
}

TEST_CASE("dgp_init builds the mean path and near-deterministic q(u)") {
  const auto d = make_dataset(random_matrix(200, 7, 41), testutil::random_normal(200, 42));
  DgpArchitecture arch;
  arch.layers = 3;
  arch.inducing = 20;
  const DgpModel model = dgp_init(d, arch, 3);
  REQUIRE(model.depth() == 3);
  CHECK(model.layers[0].mean_weights.rows() == 7);
  CHECK(model.layers[0].mean_weights.cols() == 5);
  CHECK(model.layers[1].mean_weights == MatrixXd::Identity(5, 5));
  CHECK_FALSE(model.layers[2].has_mean());
  CHECK(model.layers[1].inducing.isApprox(model.layers[0].inducing * model.layers[0].mean_weights));
  CHECK(model.layers[0].q_mu.isZero());
  const MatrixXd s = variational_moments(model.layers[0], 0).covariance;
  const MatrixXd k = kernel_matrix(model.layers[0].kernel, model.layers[0].inducing, model.layers[0].inducing);
  CHECK((s - 1e-5 * k).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(model.layers[0].q_sqrt[0].isApprox(std::sqrt(1e-5) * MatrixXd::Identity(20, 20)));
  arch.zero_mean = true;
  CHECK_FALSE(dgp_init(d, arch, 3).layers[0].has_mean());
}

TEST_CASE("SVGP (L = 1) on a noisy sine is close to the exact GP") {
  const auto make = [](Index n, std::uint64_t seed, double noise) {
    const MatrixXd x = random_matrix(n, 1, seed, -3.0, 3.0);
    return make_dataset(x, x.col(0).array().sin().matrix() + noise * testutil::random_normal(n, seed + 1));
  };
  const auto train = make(5000, 43, 0.2);
  const auto test = make(1000, 45, 0.0);
  DgpArchitecture arch;
  arch.inducing = 50;
  DgpTrainOptions opts;
  opts.train.max_steps = 3000;
  opts.train.learning_rate = 0.02;
  const auto fit = dgp_fit(train, arch, opts);
  std::vector<Index> head(1000);
  for (Index i = 0; i < 1000; ++i) head[static_cast<std::size_t>(i)] = i;
  const ExactGp exact = ExactGp::fit(train.subset(head));
  const double r_svgp = rmse(dgp_predict(fit.model, test.x, 1, 0).collapsed.mean, test.y);
  const double r_exact = rmse(exact.predict(test.x).mean, test.y);
  MESSAGE("SVGP rmse " << r_svgp << ", exact rmse " << r_exact);
  CHECK(r_svgp <= 1.3 * r_exact);
  CHECK(fit.trace.size() == 3000);
}
