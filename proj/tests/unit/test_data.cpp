#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "deepgp/data.hpp"
#include "deepgp/errors.hpp"
#include "test_util.hpp"

using namespace deepgp;
using namespace deepgp::data;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Dataset from_matrix(const MatrixXd& x) {
  Dataset d;
  d.x = x;
  d.y = VectorXd::Zero(x.rows());
  return d;
}

}  // namespace

TEST_CASE("ingest reads a well-formed file") {
  const auto dir = testutil::scratch_dir("data_ingest");
  testutil::write_file(dir / "a.csv", "id,a,b,y,zone\n1,0.5,1,2,land\n2,1.5,2,3,ocean\n3,2.5,3,4,land\n");
  CsvSchema schema;
  schema.target = "y";
  schema.label = "zone";
  schema.row_id = "id";
  const auto r = ingest_csv((dir / "a.csv").string(), schema);
  CHECK(r.dataset.size() == 3);
  CHECK(r.rejected_rows == 0);
  CHECK(r.dataset.dims() == 2);
  CHECK(r.dataset.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(r.dataset.labels == std::vector<std::string>{"land", "ocean", "land"});
  CHECK(r.dataset.row_ids == std::vector<std::int64_t>{1, 2, 3});
  CHECK(r.dataset.x(1, 0) == 1.5);
  CHECK(r.dataset.y(2) == 4.0);
}

TEST_CASE("ingest drops and counts non-finite rows") {
  const auto dir = testutil::scratch_dir("data_nan");
  testutil::write_file(dir / "a.csv", "a,y\n1,2\nnan,3\n4,5\n6,inf\n7,\n");
  CsvSchema schema;
  schema.target = "y";
  const auto r = ingest_csv((dir / "a.csv").string(), schema);
  CHECK(r.dataset.size() == 2);
  CHECK(r.rejected_rows == 3);
  CHECK(std::isfinite(r.dataset.x.sum()));
}

TEST_CASE("ingest schema errors") {
  const auto dir = testutil::scratch_dir("data_schema");
  testutil::write_file(dir / "a.csv", "a,b\n1,2\n");
  testutil::write_file(dir / "bad.csv", "a,y\nx,1\n2,nan\n");
  CsvSchema schema;
  schema.target = "y";
  CHECK_THROWS_AS(ingest_csv((dir / "a.csv").string(), schema), SchemaMismatch);
  CHECK_THROWS_AS(ingest_csv((dir / "bad.csv").string(), schema), EmptyAfterFiltering);
  CHECK_THROWS_AS(ingest_csv((dir / "missing.csv").string(), schema), SchemaMismatch);
  schema.features = {"a", "c"};
  testutil::write_file(dir / "b.csv", "a,y\n1,2\n");
  CHECK_THROWS_AS(ingest_csv((dir / "b.csv").string(), schema), SchemaMismatch);
}

TEST_CASE("raw csv table and number parsing") {
  const auto dir = testutil::scratch_dir("data_table");
  testutil::write_file(dir / "t.csv", "a;b\n1;x\n\n2;y\n");
  const auto t = read_csv_table((dir / "t.csv").string(), ';');
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  CHECK(t.rows.size() == 2);
  CHECK(t.column("b") == 1);
  CHECK(t.column("c") == -1);
  testutil::write_file(dir / "r.csv", "a,b\n1,2\n3\n");
  CHECK_THROWS_AS(read_csv_table((dir / "r.csv").string()), SchemaMismatch);

  CHECK(parse_number(" 1.5 ") == 1.5);
  CHECK(parse_number("-2e3") == -2000.0);
  CHECK_FALSE(parse_number("1.5x").has_value());
  CHECK_FALSE(parse_number("").has_value());
}

TEST_CASE("two-point standardization") {
  Dataset d;
  d.x = (MatrixXd(2, 2) << 1, 5, 3, 5).finished();
  d.y = (VectorXd(2) << 10, 20).finished();
  const auto t = fit_standardize(d);
  const Dataset z = t.apply(d);
  CHECK(t.features.mean(0) == doctest::Approx(2.0));
  CHECK(t.features.scale(0) == doctest::Approx(1.0));
  CHECK(z.x(0, 0) == doctest::Approx(-1.0));
  CHECK(z.x(1, 0) == doctest::Approx(1.0));
  // constant column: zeros with scale 1, flagged
  CHECK(t.features.constant[1]);
  CHECK_FALSE(t.features.constant[0]);
  CHECK(t.features.scale(1) == 1.0);
  CHECK(z.x.col(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.y(0) == doctest::Approx(-1.0));
  CHECK(t.invert_target(z.y)(1) == doctest::Approx(20.0));
  CHECK(t.invert_variance(VectorXd::Ones(1))(0) == doctest::Approx(25.0));
}

TEST_CASE("standardize round trip and moments") {
  Dataset d;
  d.x = testutil::random_matrix(50, 4, 3, -10.0, 30.0);
  d.y = testutil::random_normal(50, 4) * 7.0;
  const auto t = fit_standardize(d);
  const Dataset z = t.apply(d);
  for (Index j = 0; j < 4; ++j) {
    CHECK(std::abs(z.x.col(j).mean()) < 1e-12);
    CHECK(z.x.col(j).squaredNorm() / 50.0 == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK((t.features.invert(z.x) - d.x).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((t.invert_target(z.y) - d.y).cwiseAbs().maxCoeff() < 1e-10);

  Dataset one;
  one.x = MatrixXd::Ones(1, 2);
  one.y = VectorXd::Ones(1);
  CHECK_THROWS_AS(fit_standardize(one), TooFewPoints);
}

TEST_CASE("pca of axis-aligned data is +e1") {
  MatrixXd x = MatrixXd::Zero(6, 2);
  for (Index i = 0; i < 6; ++i) x(i, 0) = static_cast<double>(i) - 2.5;
  for (double sign : {1.0, -1.0}) {
    const auto p = fit_pca(from_matrix(sign * x), 1);
    CHECK(p.basis(0, 0) == doctest::Approx(1.0));
    CHECK(std::abs(p.basis(1, 0)) < 1e-12);
  }
}

TEST_CASE("pca with k = D preserves distances") {
  const MatrixXd x = testutil::random_matrix(30, 5, 7);
  const auto p = fit_pca(from_matrix(x), 5);
  CHECK((p.basis.transpose() * p.basis - MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
  const MatrixXd z = p.apply(x);
  for (Index i = 0; i < 30; ++i)
    for (Index j = i + 1; j < 30; ++j)
      CHECK(std::abs((z.row(i) - z.row(j)).norm() - (x.row(i) - x.row(j)).norm()) < 1e-8);
}

TEST_CASE("pca reconstruction error equals trailing eigenvalues") {
  MatrixXd x = testutil::random_matrix(200, 10, 11);
  x.col(1) += 2.0 * x.col(0);
  x.col(4) -= x.col(3);
  const auto p = fit_pca(from_matrix(x), 3);

  // Oracle: general (non-symmetric) eigensolver on the divisor-n covariance.
  const MatrixXd c = x.rowwise() - x.colwise().mean();
  const MatrixXd cov = c.transpose() * c / 200.0;
  Eigen::EigenSolver<MatrixXd> es(cov);
  std::vector<double> ev;
  for (Index i = 0; i < 10; ++i) ev.push_back(es.eigenvalues()(i).real());
  std::sort(ev.rbegin(), ev.rend());
  double trailing = 0.0;
  for (std::size_t i = 3; i < ev.size(); ++i) trailing += ev[i];

  const MatrixXd r = p.reconstruct(p.apply(x));
  const double err = (r - x).squaredNorm() / 200.0;
  CHECK(std::abs(err - trailing) < 1e-8);
  for (Index i = 0; i < 3; ++i) CHECK(p.variances(i) == doctest::Approx(ev[static_cast<std::size_t>(i)]).epsilon(1e-10));
  // Largest-magnitude entry of every component is positive.
  for (Index k = 0; k < 3; ++k) {
    Index arg = 0;
    p.basis.col(k).cwiseAbs().maxCoeff(&arg);
    CHECK(p.basis(arg, k) > 0.0);
  }
}

TEST_CASE("pca k bounds") {
  const Dataset d = from_matrix(testutil::random_matrix(4, 6, 1));
  CHECK_THROWS_AS(fit_pca(d, 0), KTooLarge);
  CHECK_THROWS_AS(fit_pca(d, 5), KTooLarge);
  CHECK_NOTHROW(fit_pca(d, 4));
}

TEST_CASE("pca uses training statistics only") {
  const MatrixXd train = testutil::random_matrix(40, 3, 5);
  const auto p = fit_pca(from_matrix(train), 2);
  CHECK((p.mean - train.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-14);
  const MatrixXd test = testutil::random_matrix(10, 3, 6, 5.0, 9.0);
  const MatrixXd expected = (test.rowwise() - train.colwise().mean()) * p.basis;
  CHECK((p.apply(test) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("seeded splits") {
  Dataset d;
  d.x = testutil::random_matrix(10, 2, 1);
  d.y = VectorXd::LinSpaced(10, 0, 9);
  for (std::int64_t i = 0; i < 10; ++i) d.row_ids.push_back(i);
  const auto [a, b] = split(d, 7, 3, 42);
  CHECK(a.size() == 7);
  CHECK(b.size() == 3);
  std::set<std::int64_t> ids(a.row_ids.begin(), a.row_ids.end());
  for (auto id : b.row_ids) CHECK(ids.insert(id).second);
  CHECK(ids.size() == 10);
  const auto [a2, b2] = split(d, 7, 3, 42);
  CHECK(a2.row_ids == a.row_ids);
  CHECK(b2.row_ids == b.row_ids);
  CHECK(a.y == a2.y);
  CHECK_THROWS_AS(split(d, 8, 3, 1), InfeasibleSplit);

  Dataset big;
  big.x = testutil::random_matrix(100, 1, 2);
  big.y = VectorXd::Zero(100);
  const auto [tr, te] = split_fractions(big, 0.8, 0.2, 3);
  CHECK(tr.size() == 80);
  CHECK(te.size() == 20);

  const auto p = shuffled_indices(50, 9);
  std::vector<Index> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (Index i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
  CHECK(p == shuffled_indices(50, 9));
  CHECK(p != shuffled_indices(50, 10));
}
