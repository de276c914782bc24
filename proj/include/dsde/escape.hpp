#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "dsde/rate.hpp"

namespace dsde {

enum class BoundaryHalf { full, upper, lower };

/// Disk-exit problem around a metastable state (two-dimensional models).
struct EscapeProblem {
  Vector center;            ///< disk center in model coordinates
  double radius = 0.0;      ///< R
  double delta_r = 0.0;     ///< abscissa discretization of [-R, R]
  double T_large = 0.0;     ///< scan horizon
  TimeGrid grid;
  BoundaryHalf half = BoundaryHalf::full;
  int threads = 1;
};

/// Optimal-path energies over (exit time, boundary point); ill-conditioned
/// times are flagged rather than dropped, their entries are NaN.
struct EnergyMatrix {
  std::vector<double> times;
  std::vector<Index> time_indices;
  std::vector<Vector> points;
  Matrix entries;              ///< times x points
  std::vector<char> excluded;  ///< per time row
};

struct EscapeSolution {
  bool finite = false;    ///< false: scan minimum at the right endpoint
  double T_opt = std::numeric_limits<double>::infinity();
  double T_argmin = 0.0;  ///< scan time realizing the minimum (finite or not)
  Vector q_hat;
  double energy = 0.0;
  TransitionPath path;    ///< reconstructed at T_argmin
  EnergyMatrix matrix;
  Index argmin_row = -1;
  Index argmin_col = -1;
};

/// Boundary points of the disk from abscissas x_i = -R, -R+dr, ..., R: the
/// two vertical branches (v + x_i, w +- sqrt(R^2 - x_i^2)), endpoints
/// deduplicated. Order: upper branch left to right, then lower branch right
/// to left.
inline std::vector<Vector> discretize_disk_boundary(const Vector& center,
                                                    double radius,
                                                    double delta_r) {
  detail::require(center.size() == 2, "disk boundary: center must be 2-d");
  detail::require(radius > 0.0, "disk boundary: radius must be positive");
  detail::require(delta_r > 0.0 && delta_r <= radius,
                  "disk boundary: need 0 < delta_r <= radius");
  const Index n = static_cast<Index>(std::floor(2.0 * radius / delta_r + 1e-9));
  std::vector<double> abscissas;
  abscissas.reserve(static_cast<std::size_t>(n) + 2);
  for (Index i = 0; i <= n; ++i) abscissas.push_back(-radius + delta_r * i);
  if (abscissas.back() < radius - 1e-12 * radius) abscissas.push_back(radius);
  abscissas.back() = radius;

  std::vector<Vector> points;
  points.reserve(2 * abscissas.size());
  auto chord = [&](double x) {
    return std::sqrt(std::max(0.0, radius * radius - x * x));
  };
  for (double x : abscissas) {
    Vector q(2);
    q << center(0) + x, center(1) + chord(x);
    points.push_back(q);
  }
  for (std::size_t i = abscissas.size() - 1; i-- > 1;) {
    const double x = abscissas[i];
    Vector q(2);
    q << center(0) + x, center(1) - chord(x);
    points.push_back(q);
  }
  return points;
}

inline std::vector<Vector> filter_boundary_half(const std::vector<Vector>& pts,
                                                const Vector& center,
                                                double radius,
                                                BoundaryHalf half) {
  if (half == BoundaryHalf::full) return pts;
  std::vector<Vector> out;
  const double tol = 1e-12 * radius;
  for (const auto& q : pts) {
    const double dy = q(1) - center(1);
    if ((half == BoundaryHalf::upper && dy >= -tol) ||
        (half == BoundaryHalf::lower && dy <= tol))
      out.push_back(q);
  }
  return out;
}

struct BoundaryOptimum {
  Index index = -1;  ///< position in the candidate list
  Vector q;
  double energy = std::numeric_limits<double>::infinity();
};

/// Brute-force minimum of the exit energy over candidate boundary points at a
/// fixed exit time; ties keep the earliest point in list order.
inline BoundaryOptimum boundary_optimum_fixed_T(const MeanPath& mean, double T,
                                                const Matrix& rho_TT,
                                                const std::vector<Vector>& points) {
  detail::check_conditioning(rho_TT, "boundary_optimum_fixed_T");
  detail::require(!points.empty(), "boundary_optimum_fixed_T: no points");
  const Vector& m_T = mean.at_time(T);
  Eigen::LDLT<Matrix> ldlt(rho_TT);
  BoundaryOptimum best;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Vector dq = points[k] - m_T;
    const double e = 0.5 * dq.dot(ldlt.solve(dq));
    if (e < best.energy) {
      best.energy = e;
      best.index = static_cast<Index>(k);
      best.q = points[k];
    }
  }
  return best;
}

/// Stationary-history special case: with m(T) at the disk center the
/// constrained minimization is an eigenvalue problem, and the optimum is the
/// eigenvector of rho(T,T) with the largest eigenvalue,
///   q = center +- R v_max,  energy = R^2 / (2 lambda_max(rho)).
/// Sign convention: the branch with positive second coordinate.
inline BoundaryOptimum eigen_optimum_fixed_T(const Matrix& rho_TT,
                                             double radius, const Vector& m_T,
                                             const Vector& center) {
  detail::check_conditioning(rho_TT, "eigen_optimum_fixed_T");
  if ((m_T - center).norm() > 1e-8 * (1.0 + center.norm()))
    throw parameter_error(
        "eigen_optimum_fixed_T: m(T) is away from the disk center; use "
        "boundary_optimum_fixed_T instead");
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho_TT);
  const Index dlast = rho_TT.rows() - 1;
  Vector v = es.eigenvectors().col(dlast);  // largest eigenvalue of rho
  const double pick = v.size() > 1 ? v(1) : v(0);
  if (pick < 0.0 || (pick == 0.0 && v(0) < 0.0)) v = -v;
  BoundaryOptimum best;
  best.q = center + radius * v;
  best.energy = 0.5 * radius * radius / es.eigenvalues()(dlast);
  return best;
}

/// Full scan of the disk-exit problem:
///  1. mean and covariance diagonal up to T_large,
///  2. boundary discretization,
///  3. E_{j,k} = 1/2 <rho(t_j,t_j)^{-1}(q_k - m(t_j)), q_k - m(t_j)>,
///  4. global argmin (ties: earlier time, then earlier point),
///  5. final path through one covariance column at the argmin time.
/// The exit time is reported as infinite when the scan minimum sits at the
/// right endpoint of the horizon.
inline EscapeSolution escape_optimize(const DelayModel& model,
                                      const HistoryPath& history,
                                      const EscapeProblem& problem) {
  detail::require(model.dim() == 2, "escape: model must be two-dimensional");
  detail::require(problem.radius > 0.0 && problem.delta_r > 0.0 &&
                      problem.delta_r <= problem.radius,
                  "escape: need 0 < delta_r <= radius");
  if (!detail::full_rank(model.Sigma))
    throw numeric_error("escape: Sigma is rank deficient");

  const TimeGrid& grid = problem.grid;
  const MeanPath mean = solve_mean(model, history, grid);
  const FField field = solve_F(model, grid);

  EscapeSolution sol;
  sol.matrix.points = filter_boundary_half(
      discretize_disk_boundary(problem.center, problem.radius, problem.delta_r),
      problem.center, problem.radius, problem.half);
  const auto& points = sol.matrix.points;
  detail::require(!points.empty(), "escape: boundary discretization is empty");

  const Index j_end = grid.floor_index(problem.T_large);
  detail::require(j_end >= 1, "escape: scan horizon below the first grid step");
  const Index rows = j_end;
  const Index cols = static_cast<Index>(points.size());
  sol.matrix.times.resize(static_cast<std::size_t>(rows));
  sol.matrix.time_indices.resize(static_cast<std::size_t>(rows));
  sol.matrix.entries.resize(rows, cols);
  sol.matrix.excluded.assign(static_cast<std::size_t>(rows), 0);

  // Stream the diagonal column by column and fill one E row per time.
  detail::CovarianceEngine engine(model, field);
  const Index d = model.dim();
  const int workers = std::max(1, std::min<int>(problem.threads, static_cast<int>(rows)));
  auto worker = [&](int w) {
    std::vector<Matrix> scratch(static_cast<std::size_t>(j_end + 1),
                                Matrix::Zero(d, d));
    Matrix rhs(d, d);
    for (Index r = w; r < rows; r += workers) {
      const Index jt = r + 1;
      sol.matrix.times[static_cast<std::size_t>(r)] = grid.time(jt);
      sol.matrix.time_indices[static_cast<std::size_t>(r)] = jt;
      engine.column_into(jt, jt, scratch, rhs);
      const Matrix& rho = scratch[static_cast<std::size_t>(jt)];
      if (!detail::well_conditioned_spd(rho)) {
        sol.matrix.excluded[static_cast<std::size_t>(r)] = 1;
        sol.matrix.entries.row(r).setConstant(
            std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      Eigen::LDLT<Matrix> ldlt(rho);
      const Vector& m_t = mean.at(jt);
      for (Index k = 0; k < cols; ++k) {
        const Vector dq = points[static_cast<std::size_t>(k)] - m_t;
        sol.matrix.entries(r, k) = 0.5 * dq.dot(ldlt.solve(dq));
      }
    }
  };
  if (workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker, w);
    worker(0);
    for (auto& t : pool) t.join();
  }

  // Global argmin; deterministic tie-breaking by (time index, point index).
  Index last_valid_row = -1;
  double best = std::numeric_limits<double>::infinity();
  for (Index r = 0; r < rows; ++r) {
    if (sol.matrix.excluded[static_cast<std::size_t>(r)]) continue;
    last_valid_row = r;
    for (Index k = 0; k < cols; ++k) {
      const double e = sol.matrix.entries(r, k);
      if (e < best) {
        best = e;
        sol.argmin_row = r;
        sol.argmin_col = k;
      }
    }
  }
  if (sol.argmin_row < 0)
    throw numeric_error(
        "escape: every scan time was excluded by conditioning; the scan is "
        "infeasible");

  sol.energy = best;
  sol.q_hat = points[static_cast<std::size_t>(sol.argmin_col)];
  sol.T_argmin = sol.matrix.times[static_cast<std::size_t>(sol.argmin_row)];
  sol.finite = sol.argmin_row != last_valid_row;
  sol.T_opt = sol.finite ? sol.T_argmin
                         : std::numeric_limits<double>::infinity();

  const CovarianceColumn column =
      solve_covariance_column(model, field, sol.T_argmin);
  sol.path = optimal_path(mean, column, column.at(column.t_index), sol.q_hat);
  return sol;
}

}  // namespace dsde
