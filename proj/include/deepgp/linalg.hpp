#pragma once

#include <Eigen/Dense>

namespace deepgp::linalg {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Lower Cholesky factor of (A + jitter * I).
struct CholFactor {
  MatrixXd lower;
  double jitter = 0.0;

  Index order() const { return lower.rows(); }
};

/// Jitter scale used when the caller has no better idea: 1e-12 of the mean
/// diagonal entry (floored so an all-zero matrix still gets a positive base).
double default_jitter(const MatrixXd& a);

/// Factorizes a + j*I for the first j in {0, base, 10*base, ..., 1e6*base}
/// that succeeds. Only the lower triangle of `a` is read.
/// Throws NotPositiveDefinite when every rung of the ladder fails.
CholFactor cholesky(const MatrixXd& a, double base_jitter);

/// L^{-1} b (forward substitution only).
MatrixXd lower_solve(const CholFactor& l, const MatrixXd& b);

/// (L L^T)^{-1} b.
MatrixXd tri_solve(const CholFactor& l, const MatrixXd& b);

/// (L L^T)^{-1} as a dense matrix.
MatrixXd inverse(const CholFactor& l);

/// log |L L^T| = 2 * sum(log diag L).
double logdet(const CholFactor& l);

/// Factorization of Q + diag(d) with Q = K_xu K_uu^{-1} K_ux, kept in
/// whitened form so solves and log-determinants cost O(n m^2).
///
///   V = L_uu^{-1} K_ux          (m x n)
///   A = I + V diag(d)^{-1} V^T  (m x m)
///
/// Then (Q + D)^{-1} = D^{-1} - D^{-1} V^T A^{-1} V D^{-1} and
/// log|Q + D| = sum(log d) + log|A|.
class LowRankDiag {
 public:
  LowRankDiag(const MatrixXd& kxu, const MatrixXd& kuu, const VectorXd& d);
  LowRankDiag(MatrixXd v, VectorXd d);

  MatrixXd solve(const MatrixXd& b) const;
  double logdet() const;

  const MatrixXd& v() const { return v_; }
  const VectorXd& d() const { return d_; }
  const CholFactor& a_factor() const { return a_chol_; }

 private:
  void factor();

  MatrixXd v_;
  VectorXd d_;
  CholFactor a_chol_;
};

/// (K_xu K_uu^{-1} K_ux + diag(d))^{-1} b without forming the n x n matrix.
MatrixXd lowrank_diag_solve(const MatrixXd& kxu, const MatrixXd& kuu,
                            const VectorXd& d, const MatrixXd& b);

}  // namespace deepgp::linalg
