#include "deepgp/linalg.hpp"

#include <cmath>
#include <string>

#include "deepgp/errors.hpp"

namespace deepgp::linalg {

namespace {

constexpr int kJitterRungs = 7;

bool try_factor(const MatrixXd& a, double jitter, MatrixXd& out) {
  MatrixXd shifted = a.triangularView<Eigen::Lower>();
  shifted.diagonal().array() += jitter;
  Eigen::LLT<MatrixXd, Eigen::Lower> llt(shifted);
  if (llt.info() != Eigen::Success) return false;
  out = llt.matrixL();
  const auto diag = out.diagonal().array();
  return (diag > 0.0).all() && diag.allFinite();
}

}  // namespace

double default_jitter(const MatrixXd& a) {
  if (a.rows() == 0) return 0.0;
  const double mean_diag = a.diagonal().cwiseAbs().mean();
  return 1e-12 * (mean_diag > 0.0 ? mean_diag : 1.0);
}

CholFactor cholesky(const MatrixXd& a, double base_jitter) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("cholesky needs a square matrix, got " +
                            std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  CholFactor f;
  if (try_factor(a, 0.0, f.lower)) return f;
  if (base_jitter > 0.0) {
    double jitter = base_jitter;
    for (int rung = 0; rung < kJitterRungs; ++rung, jitter *= 10.0) {
      if (try_factor(a, jitter, f.lower)) {
        f.jitter = jitter;
        return f;
      }
    }
  }
  throw NotPositiveDefinite("factorization failed for order " + std::to_string(a.rows()) +
                            " up to jitter " + std::to_string(base_jitter * 1e6));
}

MatrixXd lower_solve(const CholFactor& l, const MatrixXd& b) {
  if (b.rows() != l.order()) {
    throw DimensionMismatch("lower_solve: factor order " + std::to_string(l.order()) +
                            " vs rhs rows " + std::to_string(b.rows()));
  }
  return l.lower.triangularView<Eigen::Lower>().solve(b);
}

MatrixXd tri_solve(const CholFactor& l, const MatrixXd& b) {
  MatrixXd x = lower_solve(l, b);
  l.lower.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  return x;
}

MatrixXd inverse(const CholFactor& l) {
  return tri_solve(l, MatrixXd::Identity(l.order(), l.order()));
}

double logdet(const CholFactor& l) {
  return 2.0 * l.lower.diagonal().array().log().sum();
}

LowRankDiag::LowRankDiag(const MatrixXd& kxu, const MatrixXd& kuu, const VectorXd& d) : d_(d) {
  if (kxu.cols() != kuu.rows() || kxu.rows() != d.size()) {
    throw DimensionMismatch("lowrank_diag: K_xu is " + std::to_string(kxu.rows()) + "x" +
                            std::to_string(kxu.cols()) + ", K_uu order " +
                            std::to_string(kuu.rows()) + ", d size " + std::to_string(d.size()));
  }
  const CholFactor luu = cholesky(kuu, default_jitter(kuu));
  v_ = lower_solve(luu, kxu.transpose());
  factor();
}

LowRankDiag::LowRankDiag(MatrixXd v, VectorXd d) : v_(std::move(v)), d_(std::move(d)) {
  if (v_.cols() != d_.size()) {
    throw DimensionMismatch("lowrank_diag: V has " + std::to_string(v_.cols()) +
                            " columns, d has " + std::to_string(d_.size()));
  }
  factor();
}

void LowRankDiag::factor() {
  if ((d_.array() <= 0.0).any()) {
    throw NotPositiveDefinite("lowrank_diag: diagonal must be strictly positive");
  }
  const MatrixXd v_scaled = v_ * d_.cwiseInverse().cwiseSqrt().asDiagonal();
  MatrixXd a = MatrixXd::Identity(v_.rows(), v_.rows());
  a.selfadjointView<Eigen::Lower>().rankUpdate(v_scaled);
  a_chol_ = cholesky(a, 0.0);
}

MatrixXd LowRankDiag::solve(const MatrixXd& b) const {
  if (b.rows() != d_.size()) {
    throw DimensionMismatch("lowrank_diag solve: rhs has " + std::to_string(b.rows()) +
                            " rows, expected " + std::to_string(d_.size()));
  }
  const VectorXd d_inv = d_.cwiseInverse();
  MatrixXd db = d_inv.asDiagonal() * b;
  if (v_.rows() == 0) return db;
  const MatrixXd inner = tri_solve(a_chol_, v_ * db);
  db.noalias() -= d_inv.asDiagonal() * (v_.transpose() * inner);
  return db;
}

double LowRankDiag::logdet() const {
  return d_.array().log().sum() + linalg::logdet(a_chol_);
}

MatrixXd lowrank_diag_solve(const MatrixXd& kxu, const MatrixXd& kuu, const VectorXd& d,
                            const MatrixXd& b) {
  return LowRankDiag(kxu, kuu, d).solve(b);
}

}  // namespace deepgp::linalg
