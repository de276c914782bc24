#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "dsde/steps.hpp"

namespace dsde {

/// A path sampled on grid indices 0..t_index; values beyond its terminal time
/// (grid overhang) play no role in energy evaluation.
struct SampledPath {
  TimeGrid grid;
  double T = 0.0;
  Index t_index = 0;
  std::vector<Vector> values;

  const Vector& at(Index j) const { return values[static_cast<std::size_t>(j)]; }
  const Vector& start() const { return values.front(); }
  const Vector& terminal() const {
    return values[static_cast<std::size_t>(t_index)];
  }
};

/// Most likely transition path to a target, with its energy.
struct TransitionPath {
  SampledPath path;
  double energy = 0.0;
  double T = 0.0;
  Vector Q;
};

namespace detail {

inline Eigen::PartialPivLU<Matrix> sigma_solver(const DelayModel& model,
                                                const char* who) {
  if (!full_rank(model.Sigma))
    throw numeric_error(std::string(who) +
                        ": Sigma is rank deficient; the rate functional "
                        "requires a full-rank diffusion matrix");
  return Eigen::PartialPivLU<Matrix>(model.Sigma);
}

inline void check_conditioning(const Matrix& rho_TT, const char* who) {
  if (!well_conditioned_spd(rho_TT))
    throw numeric_error(std::string(who) +
                        ": rho(T,T) is singular or ill-conditioned "
                        "(condition number above 1e12; T too small?)");
}

}  // namespace detail

/// Rate functional of a sampled path f relative to the model's mean,
///   lambda(f) = 1/2 int_0^T || Sigma^{-1} [g'(t) - B g(t) - C g(t-tau)] ||^2 dt
/// on the centered path g = f - m, whose history on [-tau, 0) is zero.
/// Derivatives use forward differences (backward at the terminal node) and
/// the integral uses composite-trapezoid weights.
inline double path_energy(const DelayModel& model, const MeanPath& mean,
                          const SampledPath& f) {
  detail::require(f.grid.compatible(mean.grid),
                  "path_energy: path and mean live on different grids");
  detail::require(f.t_index >= 1 && f.t_index <= f.grid.last &&
                      static_cast<Index>(f.values.size()) > f.t_index &&
                      static_cast<Index>(mean.values.size()) > f.t_index,
                  "path_energy: path does not cover [0, T]");
  auto sigma_lu = detail::sigma_solver(model, "path_energy");

  const Index jT = f.t_index;
  const Index N = f.grid.steps_per_delay;
  const double d = f.grid.delta;

  auto centered = [&](Index j) -> Vector { return f.at(j) - mean.at(j); };
  double energy = 0.0;
  for (Index j = 0; j <= jT; ++j) {
    const Vector deriv = (j < jT) ? Vector((centered(j + 1) - centered(j)) / d)
                                  : Vector((centered(j) - centered(j - 1)) / d);
    const Vector g_j = centered(j);
    const Vector g_del =
        (j - N < 0) ? Vector::Zero(model.dim()) : centered(j - N);
    const Vector resid = sigma_lu.solve(deriv - model.B * g_j - model.C * g_del);
    const double weight = (j == 0 || j == jT) ? 0.5 : 1.0;
    energy += weight * resid.squaredNorm();
  }
  return 0.5 * d * energy;
}

/// Energy of the optimal transition path to Q at time T,
///   1/2 <rho(T,T)^{-1} (Q - m(T)), (Q - m(T))>,
/// evaluated through a symmetric solve.
inline double optimal_energy(const MeanPath& mean, double T,
                             const Matrix& rho_TT, const Vector& Q) {
  detail::check_conditioning(rho_TT, "optimal_energy");
  const Vector dq = Q - mean.at_time(T);
  return 0.5 * dq.dot(rho_TT.ldlt().solve(dq));
}

/// Explicit minimizer h(s) = m(s) + rho(s,T) [rho(T,T)^{-1} (Q - m(T))] on
/// [0, T], assembled from a covariance column at T.
inline TransitionPath optimal_path(const MeanPath& mean,
                                   const CovarianceColumn& column,
                                   const Matrix& rho_TT, const Vector& Q) {
  detail::require(mean.grid.compatible(column.grid),
                  "optimal_path: mean and column live on different grids");
  detail::check_conditioning(rho_TT, "optimal_path");

  const Index jT = column.t_index;
  const Vector dq = Q - mean.at(jT);
  const Vector w = rho_TT.ldlt().solve(dq);

  TransitionPath out;
  out.T = column.t_fixed;
  out.Q = Q;
  out.path.grid = column.grid;
  out.path.T = column.t_fixed;
  out.path.t_index = jT;
  out.path.values.resize(static_cast<std::size_t>(jT + 1));
  for (Index j = 0; j <= jT; ++j)
    out.path.values[static_cast<std::size_t>(j)] = mean.at(j) + column.at(j) * w;
  out.energy = 0.5 * dq.dot(w);
  return out;
}

/// Energy-vs-exit-time scan for a fixed target.
struct EnergyScan {
  std::vector<double> times;      ///< grid times t_1 .. t*(<= T_large)
  std::vector<double> energies;   ///< NaN where excluded
  std::vector<char> excluded;     ///< ill-conditioned rho(t,t), skipped
  Index argmin_index = -1;        ///< position in `times`, -1 if infeasible
  double min_energy = std::numeric_limits<double>::quiet_NaN();
  bool interior_minimum = false;
  /// Optimal transition time; +infinity when the scan minimum sits at the
  /// right endpoint (no interior minimizer on [0, T_large]).
  double T_opt = std::numeric_limits<double>::infinity();
};

inline EnergyScan transition_time_scan(const DelayModel& model,
                                       const MeanPath& mean,
                                       const CovarianceDiagonal& diagonal,
                                       const Vector& Q, double T_large) {
  detail::require(mean.grid.compatible(diagonal.grid),
                  "transition_time_scan: mean and diagonal grids differ");
  if (!detail::full_rank(model.Sigma))
    throw numeric_error("transition_time_scan: Sigma is rank deficient");
  const Index j_end = diagonal.grid.floor_index(T_large);
  detail::require(j_end >= 1, "transition_time_scan: horizon below first grid step");

  EnergyScan scan;
  scan.times.reserve(static_cast<std::size_t>(j_end));
  scan.energies.reserve(static_cast<std::size_t>(j_end));
  scan.excluded.reserve(static_cast<std::size_t>(j_end));
  Index last_valid = -1;
  for (Index j = 1; j <= j_end; ++j) {
    const Matrix& rho = diagonal.at(j);
    scan.times.push_back(diagonal.grid.time(j));
    if (!detail::well_conditioned_spd(rho)) {
      scan.energies.push_back(std::numeric_limits<double>::quiet_NaN());
      scan.excluded.push_back(1);
      continue;
    }
    const Vector dq = Q - mean.at(j);
    const double e = 0.5 * dq.dot(rho.ldlt().solve(dq));
    scan.energies.push_back(e);
    scan.excluded.push_back(0);
    const Index pos = static_cast<Index>(scan.energies.size()) - 1;
    if (scan.argmin_index < 0 || e < scan.min_energy) {
      scan.argmin_index = pos;
      scan.min_energy = e;
    }
    last_valid = pos;
  }
  if (scan.argmin_index < 0)
    throw numeric_error(
        "transition_time_scan: every scan time was excluded by conditioning");
  scan.interior_minimum = scan.argmin_index != last_valid;
  if (scan.interior_minimum)
    scan.T_opt = scan.times[static_cast<std::size_t>(scan.argmin_index)];
  return scan;
}

}  // namespace dsde
