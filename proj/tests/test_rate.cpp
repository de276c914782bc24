#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace dsde;
using oracles::vec1;
using oracles::vec2;

namespace {

SampledPath path_from(const TimeGrid& grid, double T,
                      const std::function<Vector(double)>& f) {
  SampledPath p;
  p.grid = grid;
  p.T = T;
  p.t_index = grid.index_of(T);
  for (Index j = 0; j <= p.t_index; ++j) p.values.push_back(f(grid.time(j)));
  return p;
}

struct ToggleField {
  TimeGrid grid;
  MeanPath mean;
  FField field;

  static const ToggleField& instance() {
    static ToggleField tf = [] {
      const auto& fx = oracles::ToggleFixture::instance();
      ToggleField t;
      t.grid = build_grid(1.0, 20.0, 500);
      t.mean = solve_mean(fx.lna, fx.demo_history, t.grid);
      t.field = solve_F(fx.lna, t.grid);
      return t;
    }();
    return tf;
  }
};

}  // namespace

TEST_CASE("path_energy: the mean itself has zero energy") {
  const auto& fx = oracles::ToggleFixture::instance();
  TimeGrid grid = build_grid(1.0, 3.0, 100);
  MeanPath mean = solve_mean(fx.lna, fx.demo_history, grid);
  SampledPath f = path_from(grid, 3.0, [&](double t) { return mean.at_time(t); });
  CHECK(path_energy(fx.lna, mean, f) == 0.0);
}

TEST_CASE("path_energy: Brownian straight line costs |q|^2 / (2T)") {
  DelayModel m = oracles::brownian_model(2);
  TimeGrid grid = build_grid(1.0, 2.0, 100);
  MeanPath mean = solve_mean(m, HistoryPath::constant(Vector::Zero(2), 1.0), grid);
  const Vector q = vec2(1.0, -0.5);
  const double T = 2.0;
  SampledPath f = path_from(grid, T, [&](double t) { return Vector(t / T * q); });
  const double expected = q.squaredNorm() / (2.0 * T);
  CHECK(path_energy(m, mean, f) ==
        doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("path_energy: rank-deficient Sigma is rejected") {
  DelayModel m = oracles::brownian_model(2);
  m.Sigma(1, 1) = 0.0;
  TimeGrid grid = build_grid(1.0, 1.0, 10);
  MeanPath mean = solve_mean(m, HistoryPath::constant(Vector::Zero(2), 1.0), grid);
  SampledPath f = path_from(grid, 1.0, [&](double) { return Vector::Zero(2); });
  CHECK_THROWS_AS(path_energy(m, mean, f), numeric_error);
}

TEST_CASE("path_energy: mismatched grids are rejected") {
  DelayModel m = oracles::brownian_model(1);
  TimeGrid g1 = build_grid(1.0, 1.0, 10);
  TimeGrid g2 = build_grid(1.0, 1.0, 20);
  MeanPath mean = solve_mean(m, HistoryPath::constant(vec1(0.0), 1.0), g1);
  SampledPath f = path_from(g2, 1.0, [&](double) { return vec1(0.0); });
  CHECK_THROWS_AS(path_energy(m, mean, f), parameter_error);
}

TEST_CASE("optimal_path: target on the mean gives the mean at zero energy") {
  const auto& tf = ToggleField::instance();
  const auto& fx = oracles::ToggleFixture::instance();
  const double T = 5.0;
  CovarianceColumn col = solve_covariance_column(fx.lna, tf.field, T);
  const Vector Q = tf.mean.at_time(T);
  TransitionPath h = optimal_path(tf.mean, col, col.at(col.t_index), Q);
  CHECK(h.energy == doctest::Approx(0.0));
  for (Index j = 0; j <= h.path.t_index; j += 100)
    CHECK((h.path.at(j) - tf.mean.at(j)).norm() <= 1e-12);
}

TEST_CASE("optimal_path: Brownian bridge-to-point is the straight line") {
  DelayModel m = oracles::brownian_model(2);
  TimeGrid grid = build_grid(1.0, 2.0, 500);
  MeanPath mean = solve_mean(m, HistoryPath::constant(Vector::Zero(2), 1.0), grid);
  FField field = solve_F(m, grid);
  const double T = 2.0;
  CovarianceColumn col = solve_covariance_column(m, field, T);
  const Vector Q = vec2(1.0, 0.5);
  TransitionPath h = optimal_path(mean, col, col.at(col.t_index), Q);
  for (Index j = 0; j <= h.path.t_index; j += 50) {
    const Vector expected = grid.time(j) / T * Q;
    CHECK((h.path.at(j) - expected).norm() <= 2.0 * grid.delta * Q.norm());
  }
  CHECK(h.energy == doctest::Approx(Q.squaredNorm() / (2 * T)).epsilon(5e-3));
}

TEST_CASE("optimal_path: reported toggle exit has the reported energy") {
  const auto& tf = ToggleField::instance();
  const auto& fx = oracles::ToggleFixture::instance();
  CovarianceColumn col = solve_covariance_column(fx.lna, tf.field, 1.482);
  const Vector Q_local = vec2(0.0384, 1.3031) - fx.z_low_high;
  TransitionPath h = optimal_path(tf.mean, col, col.at(col.t_index), Q_local);
  CHECK(std::abs(h.energy - 0.0348) <= 0.03 * 0.0348);
  CHECK((h.path.terminal() - Q_local).norm() <= 1e-8 * Q_local.norm());
}

TEST_CASE("optimal_path: endpoint interpolation across targets and times") {
  const auto& tf = ToggleField::instance();
  const auto& fx = oracles::ToggleFixture::instance();
  for (double T : {0.5, 2.0, 11.0}) {
    CovarianceColumn col = solve_covariance_column(fx.lna, tf.field, T);
    for (double ang : {0.1, 2.0, 4.4}) {
      const Vector Q = 0.4 * vec2(std::cos(ang), std::sin(ang));
      TransitionPath h = optimal_path(tf.mean, col, col.at(col.t_index), Q);
      CHECK((h.path.terminal() - Q).norm() <= 1e-8 * Q.norm());
      CHECK((h.path.at(0) - fx.demo_history.start()).norm() == 0.0);
    }
  }
}

TEST_CASE("optimal path is a discrete near-minimizer among admissible paths") {
  const auto& tf = ToggleField::instance();
  const auto& fx = oracles::ToggleFixture::instance();
  const double T = 2.0;
  CovarianceColumn col = solve_covariance_column(fx.lna, tf.field, T);
  const Vector Q = vec2(-0.1, 0.35);
  TransitionPath h = optimal_path(tf.mean, col, col.at(col.t_index), Q);
  const double base = path_energy(fx.lna, tf.mean, h.path);

  std::mt19937 rng(7131);
  std::uniform_real_distribution<double> amp(-0.02, 0.02);
  for (int trial = 0; trial < 12; ++trial) {
    SampledPath perturbed = h.path;
    const double a1 = amp(rng), a2 = amp(rng), a3 = amp(rng);
    for (Index j = 0; j <= perturbed.t_index; ++j) {
      const double u = perturbed.grid.time(j) / T;  // 0..1, pinned endpoints
      const double bump = a1 * std::sin(M_PI * u) + a2 * std::sin(2 * M_PI * u) +
                          a3 * std::sin(3 * M_PI * u);
      perturbed.values[static_cast<std::size_t>(j)] += bump * vec2(1.0, 0.7);
    }
    CHECK(path_energy(fx.lna, tf.mean, perturbed) >= base - 1e-6);
  }
}

TEST_CASE("optimal_energy: quadratic form basics") {
  const auto& tf = ToggleField::instance();
  const double T = 5.0;
  const Matrix rho = [&] {
    const auto& fx = oracles::ToggleFixture::instance();
    CovarianceColumn col = solve_covariance_column(fx.lna, tf.field, T);
    return col.at(col.t_index);
  }();
  const Vector mT = tf.mean.at_time(T);

  CHECK(optimal_energy(tf.mean, T, rho, mT) == 0.0);

  const Vector u = vec2(0.2, -0.1);
  const double base = optimal_energy(tf.mean, T, rho, mT + u);
  for (double alpha : {0.5, 2.0, -3.0})
    CHECK(optimal_energy(tf.mean, T, rho, mT + alpha * u) ==
          doctest::Approx(alpha * alpha * base).epsilon(1e-12));
}

TEST_CASE("optimal_energy: scalar Brownian target costs q^2 / (2T)") {
  DelayModel m = oracles::brownian_model(1);
  TimeGrid grid = build_grid(1.0, 2.0, 500);
  MeanPath mean = solve_mean(m, HistoryPath::constant(vec1(0.0), 1.0), grid);
  FField field = solve_F(m, grid);
  const double T = 2.0, q = 0.7;
  CovarianceColumn col = solve_covariance_column(m, field, T);
  CHECK(optimal_energy(mean, T, col.at(col.t_index), vec1(q)) ==
        doctest::Approx(q * q / (2 * T)).epsilon(5e-3));
}

TEST_CASE("path_energy agrees with the quadratic form on optimal paths") {
  const auto& tf = ToggleField::instance();
  const auto& fx = oracles::ToggleFixture::instance();
  for (auto [T, ang] : {std::pair{1.482, 1.8}, {4.0, 0.4}, {12.0, 3.6}}) {
    CovarianceColumn col = solve_covariance_column(fx.lna, tf.field, T);
    const Vector Q = 0.3 * vec2(std::cos(ang), std::sin(ang));
    TransitionPath h = optimal_path(tf.mean, col, col.at(col.t_index), Q);
    const double lambda = path_energy(fx.lna, tf.mean, h.path);
    CHECK(std::abs(lambda - h.energy) <= 0.01 * h.energy);
  }
}

TEST_CASE("transition_time_scan: target on the stationary mean never dips") {
  const auto& tf = ToggleField::instance();
  const auto& fx = oracles::ToggleFixture::instance();
  CovarianceDiagonal diag =
      solve_covariance_diagonal(fx.lna, tf.field, tf.grid, 2);

  // target = late mean value; the energy curve decreases toward zero and the
  // scan minimum sits at the right endpoint
  const Vector Q = tf.mean.at_time(20.0);
  EnergyScan scan = transition_time_scan(fx.lna, tf.mean, diag, Q, 20.0);
  CHECK_FALSE(scan.interior_minimum);
  CHECK(std::isinf(scan.T_opt));
  CHECK(scan.min_energy <= 1e-4);

  // fixed exit target at the top of the disk: interior minimum near the
  // reported optimal exit time
  const Vector Q_top = vec2(0.0, 0.3);
  EnergyScan scan_top = transition_time_scan(fx.lna, tf.mean, diag, Q_top, 20.0);
  CHECK(scan_top.interior_minimum);
  CHECK(scan_top.T_opt > 1.0);
  CHECK(scan_top.T_opt < 2.5);
  Index excluded = 0;
  for (char e : scan_top.excluded) excluded += (e != 0);
  CHECK(excluded == 0);
}

TEST_CASE("transition_time_scan: scalar Brownian energy decreases like 1/T") {
  DelayModel m = oracles::brownian_model(1);
  TimeGrid grid = build_grid(1.0, 4.0, 100);
  MeanPath mean = solve_mean(m, HistoryPath::constant(vec1(0.0), 1.0), grid);
  FField field = solve_F(m, grid);
  CovarianceDiagonal diag = solve_covariance_diagonal(m, field, grid);
  EnergyScan scan = transition_time_scan(m, mean, diag, vec1(0.8), 4.0);
  CHECK_FALSE(scan.interior_minimum);
  CHECK(std::isinf(scan.T_opt));
  for (std::size_t i = 1; i < scan.energies.size(); ++i)
    CHECK(scan.energies[i] <= scan.energies[i - 1] + 1e-12);
}

TEST_CASE("transition_time_scan: fully excluded scan is a numeric error") {
  DelayModel m = oracles::brownian_model(2);
  m.Sigma(1, 1) = 2e-7;  // condition number of rho beyond the 1e12 bound
  TimeGrid grid = build_grid(1.0, 2.0, 50);
  MeanPath mean = solve_mean(m, HistoryPath::constant(Vector::Zero(2), 1.0), grid);
  FField field = solve_F(m, grid);
  CovarianceDiagonal diag = solve_covariance_diagonal(m, field, grid);
  CHECK_THROWS_AS(
      transition_time_scan(m, mean, diag, vec2(1.0, 0.0), 2.0), numeric_error);
}
