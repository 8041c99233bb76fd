#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace deepgp {

/// Inducing-location initialization: k-means++ seeding followed by a few
/// Lloyd iterations. m == n returns x unchanged; when x has fewer than m
/// distinct rows a seeded random subset is returned instead.
Eigen::MatrixXd init_inducing(const Eigen::MatrixXd& x, Eigen::Index m, std::uint64_t seed,
                              int lloyd_iterations = 10, Eigen::Index max_rows = 20000);

}  // namespace deepgp
