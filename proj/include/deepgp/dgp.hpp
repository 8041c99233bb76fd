#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "deepgp/data.hpp"
#include "deepgp/kernels.hpp"
#include "deepgp/opt.hpp"
#include "deepgp/prediction.hpp"

namespace deepgp {

/// One layer of a deep GP: `width` independent GP units sharing a kernel and
/// inducing locations, each with its own Gaussian q(u).
///
/// q(u) is stored whitened: u = L v with L L^T = K_zz + jitter and
/// v ~ N(q_mu[:, k], q_sqrt[k] q_sqrt[k]^T), so the unwhitened moments are
/// m = L q_mu and S = L q_sqrt q_sqrt^T L^T (see variational_moments).
struct DgpLayer {
  KernelParams kernel;
  MatrixXd inducing;             // m x D_in
  MatrixXd q_mu;                 // m x width
  std::vector<MatrixXd> q_sqrt;  // width lower-triangular m x m factors
  MatrixXd mean_weights;         // D_in x width; empty for a zero mean function

  Index width() const { return q_mu.cols(); }
  Index input_dims() const { return inducing.cols(); }
  Index num_inducing() const { return inducing.rows(); }
  bool has_mean() const { return mean_weights.size() > 0; }
};

struct DgpModel {
  std::vector<DgpLayer> layers;
  double log_noise = 0.0;

  Index depth() const { return static_cast<Index>(layers.size()); }
  Index input_dims() const { return layers.front().input_dims(); }
  double noise_variance() const;

  /// Throws ArchitectureInvalid when widths do not chain or the last width
  /// is not 1, DimensionMismatch when a layer's arrays disagree in shape.
  void validate() const;

  /// Flat optimizer view. Per layer l (1-based): layer<l>.log_variance,
  /// layer<l>.log_lengthscales, layer<l>.inducing, layer<l>.q_mu,
  /// layer<l>.q_sqrt; then log_noise. Mean weights are fixed.
  opt::ParamLayout layout() const;
  VectorXd parameters() const;
  void set_parameters(const VectorXd& theta);
};

/// Lower Cholesky factor of K_zz plus the layer's fixed jitter
/// (1e-6 times the kernel variance).
MatrixXd inducing_cholesky(const DgpLayer& layer);

/// Unwhitened q(u) = N(mean, covariance) of one unit.
struct VariationalMoments {
  VectorXd mean;
  MatrixXd covariance;
};
VariationalMoments variational_moments(const DgpLayer& layer, Index unit);

/// Per-unit marginal of q(f^l) given fixed inputs, each b x width.
struct LayerMarginal {
  MatrixXd mean;
  MatrixXd variance;
};

/// mean = mean_fn(x) + K_xz K_zz^{-1} m_u
/// var  = k(x, x) - K_xz K_zz^{-1} (K_zz - S_u) K_zz^{-1} K_zx
LayerMarginal layer_marginal(const DgpLayer& layer, const MatrixXd& inputs);

/// Samples layers 1..upto_layer for every row independently. Row i of the
/// output depends only on (seed, i) and row i of the inputs.
MatrixXd sample_through(const DgpModel& model, const MatrixXd& inputs, std::uint64_t seed,
                        Index upto_layer);

struct ElboResult {
  double value = 0.0;
  double likelihood = 0.0;  // scaled expected log-likelihood
  double kl = 0.0;
  VectorXd gradient;        // d value / d parameters(); empty when not requested
};

/// Doubly stochastic ELBO on a batch. Hidden layers are sampled (one noise
/// stream per row, keyed by the batch row id when present), the final layer
/// expectation is closed form. The likelihood sum is scaled by
/// n_total / (batch size * mc_samples).
ElboResult elbo(const DgpModel& model, const data::Dataset& batch, Index n_total, int mc_samples,
                std::uint64_t seed, bool with_gradient = true);

struct DgpArchitecture {
  Index layers = 1;
  Index hidden_width = 5;
  Index inducing = 300;
  bool ard = false;
  bool zero_mean = false;  // hidden layers without the linear mean function

  /// Throws ArchitectureInvalid.
  void validate() const;
};

/// Initial model: Z^0 by k-means++ on the inputs, deeper Z by pushing those
/// centers through the mean path, q_mu = 0, S = 1e-5 K_zz (q_sqrt = sqrt(1e-5) I).
DgpModel dgp_init(const data::Dataset& d, const DgpArchitecture& arch, std::uint64_t seed);

struct DgpTrainOptions {
  opt::TrainConfig train;
  bool optimize_kernel = true;
  bool optimize_inducing = true;
  bool optimize_noise = true;
  double initial_noise = 0.01;
};

struct TraceRow {
  int step = 0;
  double elbo = 0.0;
  double wall_ms = 0.0;  // elapsed since the start of training
};

struct DgpFitResult {
  DgpModel model;
  std::vector<TraceRow> trace;
  int skipped_steps = 0;
};

/// Adam ascent on the ELBO over shuffled mini-batches, starting from `init`.
DgpFitResult dgp_train(DgpModel init, const data::Dataset& d, const DgpTrainOptions& options);

/// dgp_init followed by dgp_train.
DgpFitResult dgp_fit(const data::Dataset& d, const DgpArchitecture& arch,
                     const DgpTrainOptions& options = {});

/// Gaussian mixture over the final layer: S sample paths through
/// the hidden layers, one Gaussian per path.
struct MixturePrediction {
  MatrixXd component_mean;      // n x S
  MatrixXd component_variance;  // n x S, latent
  GaussianPrediction collapsed; // moment-matched, latent or observation space
};

MixturePrediction dgp_predict(const DgpModel& model, const MatrixXd& xs, int s_samples = 200,
                              std::uint64_t seed = 0, bool observation_space = false);

}  // namespace deepgp
