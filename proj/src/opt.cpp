#include "deepgp/opt.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "deepgp/errors.hpp"

namespace deepgp::opt {

// ---------------------------------------------------------------- layout

const Segment& ParamLayout::push(Segment s) {
  if (contains(s.name)) throw ConfigError("duplicate parameter group '" + s.name + "'");
  s.offset = size_;
  size_ += s.size;
  segments_.push_back(std::move(s));
  return segments_.back();
}

const Segment& ParamLayout::add_dense(const std::string& name, Index rows, Index cols) {
  Segment s;
  s.name = name;
  s.kind = SegmentKind::Dense;
  s.rows = rows;
  s.cols = cols;
  s.size = rows * cols;
  return push(std::move(s));
}

const Segment& ParamLayout::add_lower_factors(const std::string& name, Index order, Index count) {
  Segment s;
  s.name = name;
  s.kind = SegmentKind::LowerLogDiagonal;
  s.rows = order;
  s.cols = order;
  s.count = count;
  s.size = count * order * (order + 1) / 2;
  return push(std::move(s));
}

bool ParamLayout::contains(const std::string& name) const {
  return std::any_of(segments_.begin(), segments_.end(),
                     [&](const Segment& s) { return s.name == name; });
}

const Segment& ParamLayout::segment(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  throw ConfigError("unknown parameter group '" + name + "'");
}

const Segment& ParamLayout::owner(Index i) const {
  for (const auto& s : segments_) {
    if (i >= s.offset && i < s.offset + s.size) return s;
  }
  throw ConfigError("coordinate " + std::to_string(i) + " outside the parameter layout");
}

// ---------------------------------------------------------------- vector

ParamVector::ParamVector(ParamLayout layout)
    : layout_(std::move(layout)), values_(VectorXd::Zero(layout_.size())) {}

ParamVector::ParamVector(ParamLayout layout, VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.size()) {
    throw DimensionMismatch("parameter vector has " + std::to_string(values_.size()) +
                            " entries, layout expects " + std::to_string(layout_.size()));
  }
}

double ParamVector::scalar(const std::string& name) const {
  const auto& s = layout_.segment(name);
  return values_(s.offset);
}

void ParamVector::set_scalar(const std::string& name, double v) {
  values_(layout_.segment(name).offset) = v;
}

MatrixXd ParamVector::matrix(const std::string& name) const {
  const auto& s = layout_.segment(name);
  MatrixXd m(s.rows, s.cols);
  for (Index r = 0; r < s.rows; ++r) {
    for (Index c = 0; c < s.cols; ++c) m(r, c) = values_(s.offset + r * s.cols + c);
  }
  return m;
}

void ParamVector::set_matrix(const std::string& name, const MatrixXd& m) {
  const auto& s = layout_.segment(name);
  if (m.rows() != s.rows || m.cols() != s.cols) {
    throw DimensionMismatch("parameter group '" + name + "' expects " + std::to_string(s.rows) +
                            "x" + std::to_string(s.cols));
  }
  for (Index r = 0; r < s.rows; ++r) {
    for (Index c = 0; c < s.cols; ++c) values_(s.offset + r * s.cols + c) = m(r, c);
  }
}

MatrixXd ParamVector::lower_factor(const std::string& name, Index k) const {
  const auto& s = layout_.segment(name);
  const Index n = s.rows;
  Index pos = s.offset + k * n * (n + 1) / 2;
  MatrixXd l = MatrixXd::Zero(n, n);
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c <= r; ++c, ++pos) {
      l(r, c) = (r == c) ? std::exp(values_(pos)) : values_(pos);
    }
  }
  return l;
}

void ParamVector::set_lower_factor(const std::string& name, Index k, const MatrixXd& l) {
  const auto& s = layout_.segment(name);
  const Index n = s.rows;
  if (l.rows() != n || l.cols() != n) {
    throw DimensionMismatch("factor for '" + name + "' must be " + std::to_string(n) + "x" +
                            std::to_string(n));
  }
  Index pos = s.offset + k * n * (n + 1) / 2;
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c <= r; ++c, ++pos) {
      if (r == c && !(l(r, c) > 0.0)) {
        throw NotPositiveDefinite("factor diagonal must be positive in '" + name + "'");
      }
      values_(pos) = (r == c) ? std::log(l(r, c)) : l(r, c);
    }
  }
}

void ParamVector::pack_lower_factor_grad(const Segment& seg, Index k, const MatrixXd& d_lower,
                                         const MatrixXd& lower, VectorXd& grad) {
  const Index n = seg.rows;
  Index pos = seg.offset + k * n * (n + 1) / 2;
  for (Index r = 0; r < n; ++r) {
    for (Index c = 0; c <= r; ++c, ++pos) {
      grad(pos) += (r == c) ? d_lower(r, c) * lower(r, c) : d_lower(r, c);
    }
  }
}

void ParamVector::pack_dense_grad(const Segment& seg, const MatrixXd& d, VectorXd& grad) {
  for (Index r = 0; r < seg.rows; ++r) {
    for (Index c = 0; c < seg.cols; ++c) grad(seg.offset + r * seg.cols + c) += d(r, c);
  }
}

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (mc_samples < 1) throw ConfigError("mc_samples must be at least 1");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (!(tolerance >= 0.0)) throw ConfigError("tolerance must be non-negative");
}

// ---------------------------------------------------------------- adam

bool adam_step(AdamState& state, VectorXd& params, const VectorXd& grads, const TrainConfig& config) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw DimensionMismatch("adam_step: parameter, gradient and state sizes differ");
  }
  if (!grads.allFinite()) {
    ++state.skipped;
    return false;
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  state.first_moment = b1 * state.first_moment + (1.0 - b1) * grads;
  state.second_moment = b2 * state.second_moment + (1.0 - b2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, state.step);
  const double c2 = 1.0 - std::pow(b2, state.step);
  params.array() -= config.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + config.adam_eps);
  return true;
}

// ---------------------------------------------------------------- lbfgs

namespace {

double safe_eval(const Objective& f, const VectorXd& x, VectorXd* g) {
  try {
    const double v = f(x, g);
    if (!std::isfinite(v) || (g && !g->allFinite())) return std::numeric_limits<double>::infinity();
    return v;
  } catch (const NotPositiveDefinite&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

MinimizeResult minimize_lbfgs(const Objective& f, VectorXd x0, int max_iterations,
                              double gradient_tolerance, int memory) {
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 40;

  MinimizeResult res;
  res.x = std::move(x0);
  VectorXd g(res.x.size());
  res.value = f(res.x, &g);
  res.evaluations = 1;
  res.trace.push_back(res.value);
  if (!std::isfinite(res.value) || !g.allFinite()) {
    throw NonFiniteGradient("objective is not finite at the starting point");
  }

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  int stalled = 0;

  for (int it = 0; it < max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < gradient_tolerance) {
      res.converged = true;
      break;
    }

    // Two-loop recursion for the quasi-Newton direction.
    VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      q /= std::max(1.0, g.norm());
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += s_hist[i] * (alpha[i] - beta);
    }
    VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g / std::max(1.0, g.norm());
      slope = g.dot(dir);
    }

    double step = 1.0;
    VectorXd x_new, g_new(g.size());
    double v_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      x_new = res.x + step * dir;
      v_new = safe_eval(f, x_new, &g_new);
      ++res.evaluations;
      if (v_new <= res.value + kArmijo * step * slope && v_new < res.value) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (s_hist.empty()) break;  // even steepest descent made no progress
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }

    const VectorXd s = x_new - res.x;
    const VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    const double improvement = res.value - v_new;
    res.x = x_new;
    g = g_new;
    res.value = v_new;
    res.trace.push_back(v_new);
    res.iterations = it + 1;

    stalled = (improvement <= 1e-12 * std::max(1.0, std::abs(v_new))) ? stalled + 1 : 0;
    if (stalled >= 3) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------- gradcheck

GradCheckReport check_gradients(const Objective& f, const VectorXd& point, double h,
                                double tolerance, const ParamLayout* layout, double abs_floor) {
  GradCheckReport report;
  VectorXd g(point.size());
  f(point, &g);
  VectorXd probe = point;
  for (Index i = 0; i < point.size(); ++i) {
    probe(i) = point(i) + h;
    const double up = f(probe, nullptr);
    probe(i) = point(i) - h;
    const double down = f(probe, nullptr);
    probe(i) = point(i);

    CoordinateCheck c;
    c.index = i;
    c.analytic = g(i);
    c.numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(c.analytic), std::abs(c.numeric), abs_floor});
    c.rel_error = std::abs(c.analytic - c.numeric) / denom;
    if (layout) c.group = layout->owner(i).name;
    report.max_rel_error = std::max(report.max_rel_error, c.rel_error);
    if (!(c.rel_error < tolerance)) report.failing.push_back(static_cast<Index>(report.coordinates.size()));
    report.coordinates.push_back(std::move(c));
  }
  return report;
}

}  // namespace deepgp::opt
