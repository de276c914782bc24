#pragma once

#include <Eigen/Dense>

#include "dsde/errors.hpp"

namespace dsde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Relative threshold on singular values below which a matrix is treated as
/// rank deficient.
inline constexpr double kRankTolerance = 1e-10;

/// Condition-number bound past which a covariance matrix is excluded from
/// quadratic-form evaluations.
inline constexpr double kConditionLimit = 1e12;

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw parameter_error(msg);
}

/// Smallest and largest singular values.
inline std::pair<double, double> singular_value_range(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return {0.0, 0.0};
  return {sv(sv.size() - 1), sv(0)};
}

inline bool full_rank(const Matrix& m) {
  auto [smin, smax] = singular_value_range(m);
  return smax > 0.0 && smin > kRankTolerance * smax;
}

/// Eigenvalue range of a symmetric matrix (ascending solver order).
inline std::pair<double, double> sym_eigen_range(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return {ev(0), ev(ev.size() - 1)};
}

/// True when a symmetric PSD matrix is safe to invert through a solve.
inline bool well_conditioned_spd(const Matrix& m) {
  auto [lmin, lmax] = sym_eigen_range(m);
  return lmin > 0.0 && lmax / lmin < kConditionLimit;
}

}  // namespace detail
}  // namespace dsde
