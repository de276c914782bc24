#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "dsde/lna.hpp"
#include "dsde/model.hpp"
#include "dsde/parallel.hpp"

namespace dsde {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256++ with a Box-Muller normal source. Each path owns one stream
/// derived from (seed, path index), so ensembles are identical for any
/// thread count or schedule.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t path_index) {
    std::uint64_t sm = seed ^ (0xA0761D6478BD642FULL * (path_index + 1));
    for (auto& word : s_) word = splitmix64(sm);
  }

  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1], u2 in [0, 1)
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t next_u64() {
    auto rotl = [](std::uint64_t x, int k) {
      return (x << k) | (x >> (64 - k));
    };
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  std::uint64_t s_[4] = {};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace detail

/// Euler-Maruyama run configuration. The step divides the delay exactly
/// (dt = tau / steps_per_delay) so delayed lookups land on past grid nodes.
struct SimulationConfig {
  Index steps_per_delay = 100;
  double horizon = 1.0;
  Index n_paths = 1;
  std::uint64_t seed = 0;
  std::optional<double> noise_scale;  ///< overrides the model's epsilon / 1/sqrt(N)
  Index record_stride = 1;            ///< keep every stride-th step
  int threads = 1;
};

/// Ensemble of sample paths on the recorded grid (path-major flat storage).
class PathEnsemble {
 public:
  PathEnsemble(std::vector<double> times, Index n_paths, Index dim,
               std::uint64_t seed, double dt)
      : times_(std::move(times)), n_paths_(n_paths), dim_(dim), seed_(seed),
        dt_(dt), failed_(static_cast<std::size_t>(n_paths), 0),
        data_(static_cast<std::size_t>(n_paths) * times_.size() *
                  static_cast<std::size_t>(dim),
              0.0) {}

  Index n_paths() const { return n_paths_; }
  Index dim() const { return dim_; }
  double dt() const { return dt_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<double>& times() const { return times_; }
  Index n_times() const { return static_cast<Index>(times_.size()); }

  double* state_ptr(Index path, Index k) {
    return data_.data() + (static_cast<std::size_t>(path) * times_.size() +
                           static_cast<std::size_t>(k)) *
                              static_cast<std::size_t>(dim_);
  }
  const double* state_ptr(Index path, Index k) const {
    return data_.data() + (static_cast<std::size_t>(path) * times_.size() +
                           static_cast<std::size_t>(k)) *
                              static_cast<std::size_t>(dim_);
  }
  Eigen::Map<const Vector> state(Index path, Index k) const {
    return Eigen::Map<const Vector>(state_ptr(path, k), dim_);
  }

  bool failed(Index path) const {
    return failed_[static_cast<std::size_t>(path)] != 0;
  }
  void mark_failed(Index path) { failed_[static_cast<std::size_t>(path)] = 1; }
  Index n_failed() const {
    Index n = 0;
    for (char f : failed_) n += (f != 0);
    return n;
  }

  Index clamp_count() const { return clamp_count_; }
  void add_clamps(Index n) { clamp_count_ += n; }

  /// Recorded index of a time; rejects times between records.
  Index record_index(double t) const {
    const double step = times_.size() > 1 ? times_[1] - times_[0] : dt_;
    const Index k = static_cast<Index>(std::llround(t / step));
    if (k < 0 || k >= n_times() ||
        std::abs(times_[static_cast<std::size_t>(k)] - t) >
            1e-9 * std::max(1.0, std::abs(t)))
      throw parameter_error("ensemble: time " + std::to_string(t) +
                            " is not on the recorded grid");
    return k;
  }

  const std::vector<double>& raw() const { return data_; }

 private:
  std::vector<double> times_;
  Index n_paths_ = 0;
  Index dim_ = 0;
  std::uint64_t seed_ = 0;
  double dt_ = 0.0;
  std::vector<char> failed_;
  std::vector<double> data_;
  Index clamp_count_ = 0;
};

namespace detail {

struct SimPlan {
  double dt;
  Index n_steps;
  Index stride;
  std::vector<double> record_times;
};

inline SimPlan plan_simulation(double tau, const SimulationConfig& cfg) {
  require(tau > 0.0, "simulate: tau must be positive");
  require(cfg.steps_per_delay >= 1, "simulate: steps_per_delay must be >= 1");
  require(cfg.n_paths >= 1, "simulate: need at least one path");
  require(cfg.record_stride >= 1, "simulate: record_stride must be >= 1");
  SimPlan plan;
  plan.dt = tau / static_cast<double>(cfg.steps_per_delay);
  plan.n_steps = static_cast<Index>(std::llround(cfg.horizon / plan.dt));
  require(plan.n_steps >= 1 &&
              std::abs(plan.n_steps * plan.dt - cfg.horizon) <=
                  1e-9 * std::max(1.0, cfg.horizon),
          "simulate: horizon must be a multiple of the step tau/steps_per_delay");
  require(plan.n_steps % cfg.record_stride == 0,
          "simulate: record_stride must divide the number of steps");
  plan.stride = cfg.record_stride;
  for (Index k = 0; k <= plan.n_steps; k += plan.stride)
    plan.record_times.push_back(plan.dt * static_cast<double>(k));
  return plan;
}

}  // namespace detail

/// Euler-Maruyama ensemble for the linear delay SDE:
///   Y_{k+1} = Y_k + (a + B Y_k + C Y_{k-tau}) dt + eps Sigma (W_{k+1} - W_k).
inline PathEnsemble simulate_linear(const DelayModel& model,
                                    const HistoryPath& history,
                                    const SimulationConfig& cfg) {
  detail::check_model_history(model, history);
  detail::SimPlan plan = detail::plan_simulation(model.tau, cfg);
  const Index d = model.dim();
  const Index N = cfg.steps_per_delay;
  const double eps = cfg.noise_scale.value_or(model.epsilon);
  const double root_dt = std::sqrt(plan.dt);

  PathEnsemble ens(plan.record_times, cfg.n_paths, d, cfg.seed, plan.dt);
  detail::parallel_for(cfg.n_paths, cfg.threads, [&](Index p) {
    detail::NormalStream rng(cfg.seed, static_cast<std::uint64_t>(p));
    std::vector<Vector> window(static_cast<std::size_t>(N) + 1,
                               Vector::Zero(d));  // trailing delay window
    Vector x = history.start();
    Vector noise(d);
    double* rec = ens.state_ptr(p, 0);
    for (Index i = 0; i < d; ++i) rec[i] = x(i);
    window[0] = x;
    Index rec_k = 1;
    for (Index k = 0; k < plan.n_steps; ++k) {
      const Vector delayed =
          (k - N < 0) ? history.eval((k - N) * plan.dt)
                      : window[static_cast<std::size_t>((k - N) % (N + 1))];
      for (Index i = 0; i < d; ++i) noise(i) = rng.next_normal();
      x += plan.dt * (model.a + model.B * x + model.C * delayed) +
           (eps * root_dt) * (model.Sigma * noise);
      window[static_cast<std::size_t>((k + 1) % (N + 1))] = x;
      if ((k + 1) % plan.stride == 0) {
        rec = ens.state_ptr(p, rec_k++);
        for (Index i = 0; i < d; ++i) rec[i] = x(i);
      }
    }
  });
  return ens;
}

/// Euler-Maruyama ensemble for a nonlinear delay Langevin model. Square-root
/// diffusions are clamped at zero when the radicand dips negative (count
/// reported); paths that go non-finite are marked failed and frozen.
inline PathEnsemble simulate_nonlinear(const NonlinearDelayModel& model,
                                       const HistoryPath& history,
                                       const SimulationConfig& cfg) {
  detail::require(static_cast<bool>(model.drift) &&
                      (model.diffusion_clamped || model.diffusion),
                  "simulate: model lacks drift/diffusion evaluators");
  detail::require(history.dim() == model.dim, "simulate: history dimension");
  detail::SimPlan plan = detail::plan_simulation(model.tau, cfg);
  const Index d = model.dim;
  const Index N = cfg.steps_per_delay;
  const double eps = cfg.noise_scale.value_or(model.noise_scale());
  const double root_dt = std::sqrt(plan.dt);

  auto diffusion_soft = [&](const Vector& x, const Vector& xd, bool* clamped) {
    if (model.diffusion_clamped) return model.diffusion_clamped(x, xd, clamped);
    if (clamped) *clamped = false;
    return model.diffusion(x, xd);
  };

  PathEnsemble ens(plan.record_times, cfg.n_paths, d, cfg.seed, plan.dt);
  std::vector<Index> clamp_per_path(static_cast<std::size_t>(cfg.n_paths), 0);
  detail::parallel_for(cfg.n_paths, cfg.threads, [&](Index p) {
    detail::NormalStream rng(cfg.seed, static_cast<std::uint64_t>(p));
    std::vector<Vector> window(static_cast<std::size_t>(N) + 1,
                               Vector::Zero(d));
    Vector x = history.start();
    Vector noise(d);
    bool alive = true;
    double* rec = ens.state_ptr(p, 0);
    for (Index i = 0; i < d; ++i) rec[i] = x(i);
    window[0] = x;
    Index rec_k = 1;
    for (Index k = 0; k < plan.n_steps; ++k) {
      for (Index i = 0; i < d; ++i) noise(i) = rng.next_normal();
      if (alive) {
        const Vector delayed =
            (k - N < 0) ? history.eval((k - N) * plan.dt)
                        : window[static_cast<std::size_t>((k - N) % (N + 1))];
        bool clamped = false;
        const Matrix g = diffusion_soft(x, delayed, &clamped);
        if (clamped) ++clamp_per_path[static_cast<std::size_t>(p)];
        Vector next = x + plan.dt * model.drift(x, delayed) +
                      (eps * root_dt) * (g * noise);
        if (next.allFinite()) {
          x = next;
        } else {
          alive = false;  // freeze at the last finite state
          ens.mark_failed(p);
        }
      }
      window[static_cast<std::size_t>((k + 1) % (N + 1))] = x;
      if ((k + 1) % plan.stride == 0) {
        rec = ens.state_ptr(p, rec_k++);
        for (Index i = 0; i < d; ++i) rec[i] = x(i);
      }
    }
  });
  Index clamps = 0;
  for (Index c : clamp_per_path) clamps += c;
  ens.add_clamps(clamps);
  return ens;
}

/// Unbiased sample mean and covariance with standard-error estimates.
struct MomentEstimate {
  double time = 0.0;
  Index n = 0;  ///< paths used (failed paths excluded)
  Vector mean;
  Matrix covariance;
  Vector mean_se;
  Vector variance_se;  ///< Gaussian approximation, var * sqrt(2/(n-1))
};

inline std::vector<MomentEstimate> estimate_moments(
    const PathEnsemble& ens, const std::vector<double>& times) {
  std::vector<MomentEstimate> out;
  out.reserve(times.size());
  const Index d = ens.dim();
  for (double t : times) {
    const Index k = ens.record_index(t);
    MomentEstimate est;
    est.time = t;
    est.mean = Vector::Zero(d);
    for (Index p = 0; p < ens.n_paths(); ++p) {
      if (ens.failed(p)) continue;
      est.mean += ens.state(p, k);
      ++est.n;
    }
    if (est.n < 2)
      throw parameter_error(
          "estimate_moments: need at least two usable paths");
    est.mean /= static_cast<double>(est.n);
    est.covariance = Matrix::Zero(d, d);
    for (Index p = 0; p < ens.n_paths(); ++p) {
      if (ens.failed(p)) continue;
      const Vector dev = ens.state(p, k) - est.mean;
      est.covariance += dev * dev.transpose();
    }
    est.covariance /= static_cast<double>(est.n - 1);
    est.mean_se = (est.covariance.diagonal() / static_cast<double>(est.n))
                      .cwiseMax(0.0)
                      .cwiseSqrt();
    est.variance_se = est.covariance.diagonal() *
                      std::sqrt(2.0 / static_cast<double>(est.n - 1));
    out.push_back(std::move(est));
  }
  return out;
}

/// First-exit summary for a disk: crossing detected on the recorded grid and
/// located by linear interpolation between the straddling states.
struct ExitStatistics {
  std::vector<char> exited;
  std::vector<double> exit_times;   ///< NaN when the path never exited
  std::vector<Vector> exit_points;  ///< empty vector when never exited
  Index n_exited = 0;
  double exit_fraction = 0.0;
};

inline ExitStatistics exit_statistics(const PathEnsemble& ens,
                                      const Vector& center, double radius) {
  detail::require(center.size() == ens.dim(), "exit: center dimension");
  detail::require(radius >= 0.0, "exit: radius must be >= 0");
  ExitStatistics out;
  const Index P = ens.n_paths();
  out.exited.assign(static_cast<std::size_t>(P), 0);
  out.exit_times.assign(static_cast<std::size_t>(P),
                        std::numeric_limits<double>::quiet_NaN());
  out.exit_points.assign(static_cast<std::size_t>(P), Vector());
  const auto& times = ens.times();
  for (Index p = 0; p < P; ++p) {
    Vector prev = ens.state(p, 0);
    if ((prev - center).norm() >= radius) {
      out.exited[static_cast<std::size_t>(p)] = 1;
      out.exit_times[static_cast<std::size_t>(p)] = times.front();
      out.exit_points[static_cast<std::size_t>(p)] = prev;
      ++out.n_exited;
      continue;
    }
    for (Index k = 1; k < ens.n_times(); ++k) {
      const Vector here = ens.state(p, k);
      if ((here - center).norm() > radius) {
        const Vector dir = here - prev;
        const Vector rel = prev - center;
        const double a = dir.squaredNorm();
        const double b = rel.dot(dir);
        const double c = rel.squaredNorm() - radius * radius;
        double alpha = 1.0;
        if (a > 0.0) {
          const double disc = std::max(0.0, b * b - a * c);
          alpha = (-b + std::sqrt(disc)) / a;
          alpha = std::clamp(alpha, 0.0, 1.0);
        }
        out.exited[static_cast<std::size_t>(p)] = 1;
        out.exit_times[static_cast<std::size_t>(p)] =
            times[static_cast<std::size_t>(k - 1)] +
            alpha * (times[static_cast<std::size_t>(k)] -
                     times[static_cast<std::size_t>(k - 1)]);
        out.exit_points[static_cast<std::size_t>(p)] = prev + alpha * dir;
        ++out.n_exited;
        break;
      }
      prev = here;
    }
  }
  out.exit_fraction = static_cast<double>(out.n_exited) /
                      static_cast<double>(std::max<Index>(1, P));
  return out;
}

/// Fraction of paths staying within sup-distance r of a reference path given
/// on the recorded grid.
inline double tube_probability(const PathEnsemble& ens,
                               const std::vector<Vector>& reference,
                               double radius) {
  detail::require(static_cast<Index>(reference.size()) == ens.n_times(),
                  "tube: reference must be sampled on the recorded grid");
  Index inside = 0, used = 0;
  for (Index p = 0; p < ens.n_paths(); ++p) {
    if (ens.failed(p)) continue;
    ++used;
    bool stays = true;
    for (Index k = 0; k < ens.n_times() && stays; ++k)
      stays = (ens.state(p, k) - reference[static_cast<std::size_t>(k)])
                  .norm() <= radius;
    inside += stays;
  }
  detail::require(used > 0, "tube: no usable paths");
  return static_cast<double>(inside) / static_cast<double>(used);
}

}  // namespace dsde
