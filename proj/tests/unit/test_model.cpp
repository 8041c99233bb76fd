#include <doctest.h>

#include <cmath>

#include "deepgp/artifact.hpp"
#include "deepgp/errors.hpp"
#include "deepgp/model.hpp"
#include "test_util.hpp"

using namespace deepgp;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

data::Dataset toy(Index n, Index dims, std::uint64_t seed) {
  data::Dataset d;
  d.x = testutil::random_matrix(n, dims, seed, -2.0, 2.0);
  d.y.resize(n);
  const VectorXd noise = testutil::random_normal(n, seed + 100);
  for (Index i = 0; i < n; ++i) d.y(i) = 40.0 + 10.0 * std::sin(d.x.row(i).sum()) + 0.5 * noise(i);
  for (Index j = 0; j < dims; ++j) d.feature_names.push_back("f" + std::to_string(j));
  d.target_name = "t";
  return d;
}

ModelConfig config_for(ModelFamily family) {
  ModelConfig c;
  c.family = family;
  if (family != ModelFamily::exact) c.inducing = 12;
  if (family == ModelFamily::svgp || family == ModelFamily::dgp) c.max_steps = 60;
  if (family == ModelFamily::dgp) {
    c.layers = 2;
    c.hidden_width = 2;
  }
  return c;
}

bool bitwise_equal(const GaussianPrediction& a, const GaussianPrediction& b) {
  return a.mean == b.mean && a.variance == b.variance;
}

}  // namespace

TEST_CASE("family names") {
  CHECK(parse_family("svgp") == ModelFamily::svgp);
  CHECK(to_string(ModelFamily::fitc) == "fitc");
  CHECK_THROWS_AS(parse_family("sparse"), ConfigError);
}

TEST_CASE("config consistency") {
  ModelConfig c;
  c.family = ModelFamily::exact;
  c.inducing = 10;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.inducing.reset();
  CHECK_NOTHROW(c.validate());

  c.family = ModelFamily::svgp;
  c.layers = 2;
  CHECK_THROWS_AS(c.validate(), ArchitectureInvalid);
  c.layers = 1;
  CHECK_NOTHROW(c.validate());

  c.family = ModelFamily::fitc;
  c.layers.reset();
  c.subsample = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("deep defaults: 300 inducing points per layer") {
  ModelConfig c;
  c.family = ModelFamily::dgp;
  const ModelConfig r = c.resolved();
  CHECK(r.layers == 2);
  CHECK(r.inducing == 300);
  c.layers = 3;
  const auto arch = c.architecture();
  CHECK(arch.layers == 3);
  CHECK(arch.inducing == 300);
  CHECK(arch.hidden_width == 5);
}

TEST_CASE("exact model predicts in target units") {
  const auto d = toy(60, 2, 1);
  const auto r = fit_model(d, config_for(ModelFamily::exact), 0);
  CHECK(r.model.meta.n_train == 60);
  CHECK(r.model.feature_names == d.feature_names);
  CHECK(r.model.target_name == "t");
  CHECK_FALSE(r.trace.empty());
  const auto p = r.model.predict(d.x);
  CHECK(p.mean.allFinite());
  CHECK((p.variance.array() > 0.0).all());
  CHECK((p.mean - d.y).cwiseAbs().maxCoeff() < 3.0);
  CHECK(std::abs(p.mean.mean() - d.y.mean()) < 1.0);
  CHECK_THROWS_AS(r.model.predict(MatrixXd::Zero(3, 3)), DimensionMismatch);
}

TEST_CASE("exact subsample and pca pipeline") {
  const auto d = toy(80, 4, 2);
  auto c = config_for(ModelFamily::exact);
  c.subsample = 30;
  c.pca_components = 2;
  const auto r = fit_model(d, c, 5);
  CHECK(r.model.meta.n_train == 30);
  REQUIRE(r.model.pca.has_value());
  CHECK(r.model.pca->basis.cols() == 2);
  CHECK(r.model.input_dims() == 4);
  CHECK(r.model.transform_inputs(d.x).cols() == 2);
  const auto again = fit_model(d, c, 5);
  CHECK(bitwise_equal(r.model.predict(d.x), again.model.predict(d.x)));
}

TEST_CASE("shallow variational prediction ignores the seed") {
  const auto d = toy(50, 1, 3);
  const auto r = fit_model(d, config_for(ModelFamily::svgp), 1);
  CHECK(bitwise_equal(r.model.predict(d.x, 1, 1), r.model.predict(d.x, 1, 99)));
  CHECK(bitwise_equal(r.model.predict(d.x, 200, 1), r.model.predict(d.x, 1, 7)));
}

TEST_CASE("deep prediction is reproducible under seed") {
  const auto d = toy(50, 2, 4);
  const auto r = fit_model(d, config_for(ModelFamily::dgp), 1);
  CHECK(bitwise_equal(r.model.predict(d.x, 20, 3), r.model.predict(d.x, 20, 3)));
  CHECK_FALSE(bitwise_equal(r.model.predict(d.x, 20, 3), r.model.predict(d.x, 20, 4)));
  CHECK(r.trace.size() == 60);
  const auto again = fit_model(d, config_for(ModelFamily::dgp), 1);
  CHECK(model_to_json(again.model) == model_to_json(r.model));
}

TEST_CASE("save, load, predict is bitwise identical for every family") {
  const auto dir = testutil::scratch_dir("model_roundtrip");
  const auto d = toy(45, 3, 6);
  const MatrixXd probe = testutil::random_matrix(25, 3, 7, -2.5, 2.5);
  for (auto family : {ModelFamily::exact, ModelFamily::fitc, ModelFamily::svgp, ModelFamily::dgp}) {
    CAPTURE(to_string(family));
    auto c = config_for(family);
    if (family == ModelFamily::fitc) c.pca_components = 2;
    const auto r = fit_model(d, c, 11);
    const auto path = (dir / (to_string(family) + ".json")).string();
    save_model(r.model, path);
    const FittedModel back = load_model(path);
    CHECK(back.config.family == family);
    CHECK(back.meta.seed == 11);
    CHECK(back.meta.steps == r.model.meta.steps);
    CHECK(back.meta.final_objective == r.model.meta.final_objective);
    CHECK(back.feature_names == r.model.feature_names);
    CHECK(bitwise_equal(back.predict(probe, 30, 5), r.model.predict(probe, 30, 5)));
    // A second save of the reloaded model is byte-identical.
    save_model(back, path + ".2");
    CHECK(testutil::read_file(path) == testutil::read_file(path + ".2"));
  }
}

TEST_CASE("format version is enforced") {
  const auto r = fit_model(toy(20, 1, 8), config_for(ModelFamily::exact), 0);
  nlohmann::json doc = model_to_json(r.model);
  CHECK(doc["format_version"] == kModelFormatVersion);
  CHECK(doc["family"] == "exact");

  nlohmann::json newer = doc;
  newer["format_version"] = kModelFormatVersion + 1;
  try {
    model_from_json(newer);
    FAIL("newer version accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("newer") != std::string::npos);
  }
  nlohmann::json missing = doc;
  missing.erase("format_version");
  CHECK_THROWS_AS(model_from_json(missing), FormatError);
  nlohmann::json broken = doc;
  broken["parameters"].erase("x");
  CHECK_THROWS_AS(model_from_json(broken), FormatError);

  const auto dir = testutil::scratch_dir("model_format");
  testutil::write_file(dir / "junk.json", "{ not json");
  CHECK_THROWS_AS(load_model((dir / "junk.json").string()), FormatError);
  CHECK_THROWS_AS(load_model((dir / "absent.json").string()), FormatError);
}

TEST_CASE("deep architecture is echoed in the artifact") {
  ModelConfig c;
  c.family = ModelFamily::dgp;
  c.layers = 3;
  c.max_steps = 2;
  c.batch_size = 32;
  const auto r = fit_model(toy(310, 5, 9), c, 0);
  const auto doc = model_to_json(r.model);
  CHECK(doc["config"]["layers"] == 3);
  CHECK(doc["config"]["inducing"] == 300);
  CHECK(doc["config"]["hidden_width"] == 5);
  REQUIRE(doc["parameters"]["layers"].size() == 3);
  CHECK(doc["parameters"]["layers"][0]["inducing"]["rows"] == 300);
}
