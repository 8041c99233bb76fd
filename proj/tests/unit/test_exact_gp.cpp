#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "deepgp/data.hpp"
#include "deepgp/errors.hpp"
#include "deepgp/exact_gp.hpp"
#include "test_util.hpp"

using namespace deepgp;
using testutil::random_matrix;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * M_PI);

data::Dataset make_dataset(MatrixXd x, VectorXd y) {
  data::Dataset d;
  d.x = std::move(x);
  d.y = std::move(y);
  return d;
}

// Draw y ~ N(0, K + noise I) by an explicit Cholesky; independent of the model code.
data::Dataset gp_sample(Index n, Index dims, double variance, double lengthscale, double noise,
                        std::uint64_t seed, double box = 1.0) {
  MatrixXd x = random_matrix(n, dims, seed, 0.0, box);
  MatrixXd k = testutil::naive_rbf(variance, VectorXd::Constant(1, lengthscale), x, x);
  k.diagonal().array() += noise + 1e-10;
  const MatrixXd l = k.llt().matrixL();
  return make_dataset(x, l * testutil::random_normal(n, seed + 1));
}

}  // namespace

TEST_CASE("nll closed form for one point") {
  MatrixXd x = MatrixXd::Zero(1, 1);
  const ExactGp zero(KernelParams::isotropic(1.0, 1.0), 0.0, x, VectorXd::Zero(1));
  CHECK(zero.nll().value == doctest::Approx(0.5 * std::log(2.0) + kHalfLog2Pi).epsilon(1e-14));
  const ExactGp two(KernelParams::isotropic(1.0, 1.0), 0.0, x, VectorXd::Constant(1, 2.0));
  CHECK(two.nll().value == doctest::Approx(1.0 + 0.5 * std::log(2.0) + kHalfLog2Pi).epsilon(1e-14));
}

TEST_CASE("nll matches a dense Gaussian density") {
  const auto d = gp_sample(15, 2, 1.3, 0.4, 0.05, 4);
  const auto kernel = KernelParams::isotropic(0.9, 0.5);
  const ExactGp gp(kernel, std::log(0.1), d.x, d.y);
  MatrixXd c = testutil::naive_rbf(0.9, VectorXd::Constant(1, 0.5), d.x, d.x);
  c.diagonal().array() += 0.1;
  CHECK(gp.nll().value == doctest::Approx(testutil::dense_gaussian_nll(c, d.y)).epsilon(1e-12));
}

TEST_CASE("nll gradients match central finite differences") {
  for (bool ard : {false, true}) {
    const auto d = gp_sample(20, 3, 1.0, 0.5, 0.05, 7);
    const KernelParams k = ard ? KernelParams::ard(1.2, Eigen::Vector3d(0.4, 0.7, 1.1))
                               : KernelParams::isotropic(1.2, 0.6);
    const ExactGp gp(k, std::log(0.08), d.x, d.y);
    const auto fd = testutil::fd_gradient(
        [&](const VectorXd& t) {
          ExactGp probe = gp;
          probe.set_hyperparameters(t);
          return probe.nll().value;
        },
        gp.hyperparameters());
    CHECK(testutil::max_rel_error(gp.nll().gradient, fd) < 1e-4);
  }
}

TEST_CASE("prediction at a single training point") {
  MatrixXd x = MatrixXd::Constant(1, 1, 0.3);
  const ExactGp gp(KernelParams::isotropic(1.0, 1.0), 0.0, x, VectorXd::Constant(1, 1.0));
  const auto p = gp.predict(x);
  CHECK(p.mean(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p.variance(0) == doctest::Approx(0.5).epsilon(1e-14));
  const auto obs = gp.predict(x, true);
  CHECK(obs.variance(0) == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("prediction reverts to the prior far from the data") {
  const auto d = gp_sample(30, 2, 1.7, 0.3, 0.01, 3);
  const ExactGp gp(KernelParams::isotropic(1.7, 0.3), std::log(0.01), d.x, d.y);
  const auto p = gp.predict(MatrixXd::Constant(1, 2, 100.0));
  CHECK(std::abs(p.mean(0)) < 1e-6);
  CHECK(std::abs(p.variance(0) - 1.7) < 1e-6);
}

TEST_CASE("noiseless prediction interpolates the training targets") {
  MatrixXd x(5, 1);
  x << 0.0, 1.0, 2.0, 3.0, 4.0;
  const VectorXd y = testutil::random_normal(5, 2);
  const ExactGp gp(KernelParams::isotropic(1.0, 0.7), std::log(1e-12), x, y);
  CHECK((gp.predict(x).mean - y).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("property: observation variance lies in [0, variance + noise]") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto d = gp_sample(25, 2, 1.0, 0.4, 0.02, seed);
    const ExactGp gp(KernelParams::isotropic(1.4, 0.3 + 0.1 * static_cast<double>(seed)),
                     std::log(0.03), d.x, d.y);
    const auto p = gp.predict(random_matrix(40, 2, seed + 10, -1.0, 2.0), true);
    CHECK((p.variance.array() >= 0.0).all());
    CHECK((p.variance.array() <= 1.4 + 0.03 + 1e-12).all());
  }
}

TEST_CASE("fit recovers generating hyperparameters") {
  // One n=200 draw only pins the log-parameters to about +-0.2 (one sd), so
  // the single-draw check uses a fixed draw and the multi-draw median below
  // carries the statistical claim.
  const double true_var = 1.0, true_ls = 0.5, true_noise = 0.01;
  const auto d = gp_sample(200, 2, true_var, true_ls, true_noise, 1, 5.0);
  const ExactGp gp = ExactGp::fit(d);
  CHECK(std::abs(gp.kernel().log_variance - std::log(true_var)) < 0.3);
  CHECK(std::abs(gp.kernel().log_lengthscales(0) - std::log(true_ls)) < 0.3);
  CHECK(std::abs(gp.log_noise() - std::log(true_noise)) < 0.3);

  const auto& trace = gp.fit_summary().trace;
  REQUIRE(trace.size() > 1);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] < trace[i - 1]);
}

TEST_CASE("median recovery error over repeated draws is small") {
  std::vector<double> err_var, err_ls, err_noise;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto d = gp_sample(200, 2, 1.0, 0.5, 0.01, seed, 5.0);
    const ExactGp gp = ExactGp::fit(d);
    err_var.push_back(std::abs(gp.kernel().log_variance));
    err_ls.push_back(std::abs(gp.kernel().log_lengthscales(0) - std::log(0.5)));
    err_noise.push_back(std::abs(gp.log_noise() - std::log(0.01)));
  }
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + 5, v.end());
    return v[5];
  };
  CHECK(median(err_var) < 0.3);
  CHECK(median(err_ls) < 0.3);
  CHECK(median(err_noise) < 0.3);
}

TEST_CASE("constant targets are reproduced through the standardization pipeline") {
  data::Dataset d = make_dataset(random_matrix(30, 2, 5), VectorXd::Constant(30, 4.2));
  const auto t = data::fit_standardize(d);
  CHECK(t.target_constant);
  const ExactGp gp = ExactGp::fit(t.apply(d));
  const MatrixXd probe = t.features.apply(random_matrix(10, 2, 6, -3.0, 3.0));
  const VectorXd mean = t.invert_target(gp.predict(probe).mean);
  CHECK((mean.array() - 4.2).abs().maxCoeff() < 1e-3);
}

TEST_CASE("fit on a single point converges without error") {
  const data::Dataset d = make_dataset(MatrixXd::Constant(1, 2, 0.5), VectorXd::Constant(1, 0.7));
  const ExactGp gp = ExactGp::fit(d);
  CHECK(std::isfinite(gp.nll().value));
  CHECK(std::isfinite(gp.predict(d.x).mean(0)));
}

TEST_CASE("size cap is enforced unless overridden") {
  const data::Dataset d = make_dataset(random_matrix(12, 1, 1), testutil::random_normal(12, 2));
  ExactGpOptions opts;
  opts.max_points = 10;
  CHECK_THROWS_AS(ExactGp::fit(d, opts), TooManyPoints);
  opts.allow_oversize = true;
  opts.train.max_steps = 5;
  CHECK_NOTHROW(ExactGp::fit(d, opts));
}

TEST_CASE("predict rejects a column mismatch") {
  const ExactGp gp(KernelParams::isotropic(1, 1), 0.0, random_matrix(3, 2, 1), VectorXd::Zero(3));
  CHECK_THROWS_AS(gp.predict(random_matrix(2, 3, 2)), DimensionMismatch);
}
