#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dsde/linalg.hpp"

namespace dsde {

/// Linear delay SDE
///   dX_t = (a + B X_t + C X_{t-tau}) dt + epsilon * Sigma dW_t,
/// with X_t given by a history curve on [-tau, 0].
struct DelayModel {
  Vector a;       ///< drift offset, length d
  Matrix B;       ///< drift on the present state, d x d
  Matrix C;       ///< drift on the delayed state, d x d
  Matrix Sigma;   ///< diffusion matrix, d x d
  double tau = 0.0;
  double epsilon = 1.0;

  Index dim() const { return a.size(); }

  bool dims_consistent() const {
    const Index d = dim();
    return d > 0 && B.rows() == d && B.cols() == d && C.rows() == d &&
           C.cols() == d && Sigma.rows() == d && Sigma.cols() == d;
  }
};

/// Sampled initial history on [-tau, 0], evaluated by piecewise-linear
/// interpolation. The last sample gives the process start point gamma(0).
class HistoryPath {
 public:
  HistoryPath() = default;

  HistoryPath(std::vector<double> times, std::vector<Vector> values)
      : times_(std::move(times)), values_(std::move(values)) {
    detail::require(times_.size() == values_.size() && times_.size() >= 2,
                    "history: need at least two (time, value) samples");
    for (std::size_t i = 1; i < times_.size(); ++i)
      detail::require(times_[i] > times_[i - 1],
                      "history: sample times must be strictly increasing");
    detail::require(times_.back() == 0.0, "history: last sample must be at t=0");
  }

  static HistoryPath constant(const Vector& value, double tau) {
    detail::require(tau > 0.0, "history: tau must be positive");
    return HistoryPath({-tau, 0.0}, {value, value});
  }

  /// Piecewise-linear value at t in [times.front(), 0]; exact at sample nodes.
  Vector eval(double t) const {
    if (t < times_.front() || t > times_.back())
      throw parameter_error("history: evaluation time " + std::to_string(t) +
                            " outside [" + std::to_string(times_.front()) +
                            ", 0]");
    auto it = std::lower_bound(times_.begin(), times_.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - times_.begin());
    if (hi == 0) return values_.front();
    if (times_[hi] == t) return values_[hi];
    std::size_t lo = hi - 1;
    double alpha = (t - times_[lo]) / (times_[hi] - times_[lo]);
    return values_[lo] + alpha * (values_[hi] - values_[lo]);
  }

  /// Process start point gamma(0).
  const Vector& start() const { return values_.back(); }

  double earliest() const { return times_.front(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Vector>& values() const { return values_; }
  Index dim() const { return values_.empty() ? 0 : values_.front().size(); }

 private:
  std::vector<double> times_;
  std::vector<Vector> values_;
};

/// Uniform grid with N steps per delay interval. Points are t_j = j*tau/N for
/// j = 0..M with M = N*(1 + floor(T/tau)); index 0 carries the start time so
/// paths begin at their true initial values. The grid deliberately overhangs T
/// when T is not a multiple of tau; consumers clamp at T.
struct TimeGrid {
  double tau = 0.0;
  Index steps_per_delay = 0;  ///< N
  double horizon = 0.0;       ///< requested T
  Index last = 0;             ///< M
  double delta = 0.0;         ///< tau / N

  double time(Index j) const { return delta * static_cast<double>(j); }
  Index size() const { return last + 1; }

  bool compatible(const TimeGrid& other) const {
    return tau == other.tau && steps_per_delay == other.steps_per_delay &&
           last == other.last;
  }

  /// Index of a grid time; rejects times that do not land on the grid.
  Index index_of(double t) const {
    const Index j = static_cast<Index>(std::llround(t / delta));
    if (j < 0 || j > last || std::abs(t - time(j)) > 1e-9 * std::max(1.0, std::abs(t)))
      throw parameter_error("time " + std::to_string(t) + " is not a grid point");
    return j;
  }

  /// Largest grid index whose time does not exceed t.
  Index floor_index(double t) const {
    Index j = static_cast<Index>(std::floor(t / delta + 1e-9));
    return std::clamp<Index>(j, 0, last);
  }
};

inline TimeGrid build_grid(double tau, double T, Index steps_per_delay) {
  detail::require(tau > 0.0, "grid: tau must be positive");
  detail::require(T > 0.0, "grid: horizon must be positive");
  detail::require(steps_per_delay >= 2, "grid: need at least 2 steps per delay");
  TimeGrid g;
  g.tau = tau;
  g.steps_per_delay = steps_per_delay;
  g.horizon = T;
  g.last = steps_per_delay * (1 + static_cast<Index>(std::floor(T / tau)));
  g.delta = tau / static_cast<double>(steps_per_delay);
  return g;
}

/// Diagnostic report for a model/history pair. Downstream solvers reject
/// invalid inputs themselves; this op only describes what it found.
struct ValidationReport {
  bool dims_consistent = false;
  bool tau_positive = false;
  bool sigma_full_rank = false;
  double sigma_smallest_sv = 0.0;
  double sigma_largest_sv = 0.0;
  bool history_covers_delay = false;
  std::vector<std::string> issues;

  bool ok() const { return issues.empty(); }
};

inline ValidationReport validate_model(const DelayModel& model,
                                       const HistoryPath& history) {
  ValidationReport rep;
  rep.dims_consistent = model.dims_consistent();
  if (!rep.dims_consistent)
    rep.issues.push_back("matrix/vector dimensions are inconsistent");
  rep.tau_positive = model.tau > 0.0;
  if (!rep.tau_positive) rep.issues.push_back("tau must be strictly positive");
  if (model.epsilon < 0.0) rep.issues.push_back("epsilon must be >= 0");

  if (model.Sigma.size() > 0) {
    auto [smin, smax] = detail::singular_value_range(model.Sigma);
    rep.sigma_smallest_sv = smin;
    rep.sigma_largest_sv = smax;
    rep.sigma_full_rank = smax > 0.0 && smin > kRankTolerance * smax;
  }

  if (history.dim() != model.dim())
    rep.issues.push_back("history dimension does not match model");
  const double tol = 1e-12 * std::max(1.0, model.tau);
  rep.history_covers_delay =
      model.tau > 0.0 && history.earliest() <= -model.tau + tol;
  if (!rep.history_covers_delay)
    rep.issues.push_back("history does not cover [-tau, 0]");
  return rep;
}

}  // namespace dsde
