#include "deepgp/inducing.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "deepgp/data.hpp"
#include "deepgp/errors.hpp"

namespace deepgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_subset(const MatrixXd& x, Index m, std::uint64_t seed) {
  const auto idx = data::shuffled_indices(x.rows(), seed);
  MatrixXd z(m, x.cols());
  for (Index i = 0; i < m; ++i) z.row(i) = x.row(idx[static_cast<std::size_t>(i)]);
  return z;
}

}  // namespace

MatrixXd init_inducing(const MatrixXd& x, Index m, std::uint64_t seed, int lloyd_iterations,
                       Index max_rows) {
  const Index n = x.rows();
  if (m < 1 || m > n) {
    throw TooFewPoints("cannot place " + std::to_string(m) + " inducing points on " +
                       std::to_string(n) + " rows");
  }
  if (m == n) return x;

  // Large inputs are clustered on a seeded subsample.
  const MatrixXd pts = n > max_rows ? random_subset(x, max_rows, seed ^ 0x9e3779b97f4a7c15ULL) : x;
  const Index np = pts.rows();

  std::mt19937_64 rng(seed);
  MatrixXd z(m, x.cols());
  std::uniform_int_distribution<Index> first(0, np - 1);
  z.row(0) = pts.row(first(rng));
  VectorXd d2 = (pts.rowwise() - z.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < m; ++c) {
    const double total = d2.sum();
    if (!(total > 0.0)) return random_subset(x, m, seed);  // fewer than m distinct rows
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    Index pick = np - 1;
    for (Index i = 0; i < np; ++i) {
      target -= d2(i);
      if (target <= 0.0) {
        pick = i;
        break;
      }
    }
    z.row(c) = pts.row(pick);
    d2 = d2.cwiseMin((pts.rowwise() - z.row(c)).rowwise().squaredNorm());
  }

  std::vector<Index> assign(static_cast<std::size_t>(np));
  for (int it = 0; it < lloyd_iterations; ++it) {
    const VectorXd zn = z.rowwise().squaredNorm();
    MatrixXd dist = -2.0 * pts * z.transpose();
    dist.rowwise() += zn.transpose();
    for (Index i = 0; i < np; ++i) dist.row(i).minCoeff(&assign[static_cast<std::size_t>(i)]);
    MatrixXd sums = MatrixXd::Zero(m, x.cols());
    VectorXd counts = VectorXd::Zero(m);
    for (Index i = 0; i < np; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += pts.row(i);
      counts(assign[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (Index c = 0; c < m; ++c) {
      if (counts(c) > 0.0) z.row(c) = sums.row(c) / counts(c);
    }
  }
  return z;
}

}  // namespace deepgp
