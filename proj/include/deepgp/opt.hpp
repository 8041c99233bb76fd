#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace deepgp::opt {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// How a segment of the flat vector is decoded.
enum class SegmentKind {
  Dense,            // rows x cols matrix, row-major
  LowerLogDiagonal  // `count` lower-triangular (rows x rows) factors, packed
                    // row by row, diagonal stored as log
};

struct Segment {
  std::string name;
  SegmentKind kind = SegmentKind::Dense;
  Index offset = 0;
  Index size = 0;
  Index rows = 0;
  Index cols = 0;
  Index count = 1;
};

/// Registry mapping named parameter groups onto a flat vector.
class ParamLayout {
 public:
  const Segment& add_dense(const std::string& name, Index rows, Index cols);
  const Segment& add_lower_factors(const std::string& name, Index order, Index count);

  const Segment& segment(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<Segment>& segments() const { return segments_; }
  Index size() const { return size_; }

  /// Name of the group owning flat coordinate `i`.
  const Segment& owner(Index i) const;

 private:
  const Segment& push(Segment s);

  std::vector<Segment> segments_;
  Index size_ = 0;
};

/// Flat parameter vector with typed accessors over a ParamLayout.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout);
  ParamVector(ParamLayout layout, VectorXd values);

  const ParamLayout& layout() const { return layout_; }
  const VectorXd& values() const { return values_; }
  VectorXd& values() { return values_; }
  Index size() const { return values_.size(); }

  double scalar(const std::string& name) const;
  void set_scalar(const std::string& name, double v);

  MatrixXd matrix(const std::string& name) const;
  void set_matrix(const std::string& name, const MatrixXd& m);

  /// Decodes factor `k` of a LowerLogDiagonal segment (diagonal exponentiated).
  MatrixXd lower_factor(const std::string& name, Index k) const;
  /// Encodes a lower-triangular factor; its diagonal must be strictly positive.
  void set_lower_factor(const std::string& name, Index k, const MatrixXd& l);

  /// Writes dLoss/dL for factor k as a gradient over the packed coordinates,
  /// applying the chain rule through the log-diagonal transform.
  static void pack_lower_factor_grad(const Segment& seg, Index k, const MatrixXd& d_lower,
                                     const MatrixXd& lower, VectorXd& grad);
  static void pack_dense_grad(const Segment& seg, const MatrixXd& d, VectorXd& grad);

 private:
  ParamLayout layout_;
  VectorXd values_;
};

/// Optimizer settings shared by all model families.
struct TrainConfig {
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_steps = 2000;
  Index batch_size = 256;
  int mc_samples = 1;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;

  /// Throws ConfigError on a violated invariant.
  void validate() const;
};

struct AdamState {
  VectorXd first_moment;
  VectorXd second_moment;
  int step = 0;
  int skipped = 0;

  explicit AdamState(Index n = 0)
      : first_moment(VectorXd::Zero(n)), second_moment(VectorXd::Zero(n)) {}
};

/// One Adam update (descent direction) with bias correction. A gradient with
/// any NaN/Inf entry leaves `params` and moments untouched, increments
/// `state.skipped` and returns false.
bool adam_step(AdamState& state, VectorXd& params, const VectorXd& grads, const TrainConfig& config);

/// Value and (optionally) gradient of a scalar objective. `grad` is null when
/// only the value is needed.
using Objective = std::function<double(const VectorXd& x, VectorXd* grad)>;

struct MinimizeResult {
  VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> trace;  // accepted objective values, starting point first
};

/// Limited-memory BFGS with a backtracking Armijo line search. Every accepted
/// step strictly decreases the objective. Evaluations that throw or return a
/// non-finite value are treated as +inf and trigger backtracking.
MinimizeResult minimize_lbfgs(const Objective& f, VectorXd x0, int max_iterations,
                              double gradient_tolerance, int memory = 10);

struct CoordinateCheck {
  Index index = 0;
  std::string group;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<CoordinateCheck> coordinates;
  std::vector<Index> failing;  // indices into `coordinates` above tolerance

  bool passed() const { return failing.empty(); }
};

/// Central finite differences against the objective's reported gradient.
/// Relative error per coordinate is |g - fd| / max(|g|, |fd|, abs_floor).
/// `layout`, when given, labels each coordinate with its parameter group.
GradCheckReport check_gradients(const Objective& f, const VectorXd& point, double h,
                                double tolerance, const ParamLayout* layout = nullptr,
                                double abs_floor = 1e-6);

}  // namespace deepgp::opt
