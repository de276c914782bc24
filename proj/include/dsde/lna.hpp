#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "dsde/model.hpp"

namespace dsde {

/// Nonlinear delay Langevin system
///   dx_t = f(x_t, x_{t-tau}) dt + (1/sqrt(N)) g(x_t, x_{t-tau}) dW_t.
/// Evaluators must be pure (no internal mutable state) so they can be called
/// concurrently.
struct NonlinearDelayModel {
  Index dim = 0;
  double tau = 0.0;
  double system_size = 1.0;  ///< N; noise scale is 1/sqrt(N)

  std::function<Vector(const Vector&, const Vector&)> drift;
  std::function<Matrix(const Vector&, const Vector&)> diffusion;
  /// Soft variant used by simulators: clamps instead of failing when the
  /// state leaves the physical region, setting *clamped when it does.
  std::function<Matrix(const Vector&, const Vector&, bool* clamped)>
      diffusion_clamped;
  /// Optional closed-form Jacobians of the drift in its present / delayed
  /// arguments; finite differences are used when absent.
  std::function<Matrix(const Vector&, const Vector&)> drift_jac_present;
  std::function<Matrix(const Vector&, const Vector&)> drift_jac_delayed;

  double noise_scale() const { return 1.0 / std::sqrt(system_size); }
};

/// Co-repressive toggle switch parameters.
struct ToggleParams {
  double beta = 0.73;      ///< maximal production rate
  double k = 0.05;         ///< half-repression level
  double gamma = std::log(2.0);  ///< dilution rate
  double tau = 1.0;
  double system_size = 1000.0;
};

/// Chemical Langevin model of the co-repressive toggle switch: each species
/// represses the delayed production of the other,
///   dx = (beta/(1 + y_tau^2/k) - gamma x) dt + sqrt(beta/(1+y_tau^2/k) + gamma x)/sqrt(N) dW1,
/// and symmetrically for y.
inline NonlinearDelayModel toggle_model(const ToggleParams& p) {
  detail::require(p.beta > 0 && p.k > 0 && p.gamma > 0 && p.tau > 0 &&
                      p.system_size > 0,
                  "toggle: all parameters must be positive");
  NonlinearDelayModel m;
  m.dim = 2;
  m.tau = p.tau;
  m.system_size = p.system_size;

  const double beta = p.beta, k = p.k, gamma = p.gamma;
  auto hill = [beta, k](double u) { return beta / (1.0 + u * u / k); };

  m.drift = [hill, gamma](const Vector& x, const Vector& xd) {
    Vector f(2);
    f << hill(xd(1)) - gamma * x(0), hill(xd(0)) - gamma * x(1);
    return f;
  };
  m.diffusion_clamped = [hill, gamma](const Vector& x, const Vector& xd,
                                      bool* clamped) {
    double r0 = hill(xd(1)) + gamma * x(0);
    double r1 = hill(xd(0)) + gamma * x(1);
    if (clamped) *clamped = (r0 < 0.0 || r1 < 0.0);
    Matrix g = Matrix::Zero(2, 2);
    g(0, 0) = std::sqrt(std::max(0.0, r0));
    g(1, 1) = std::sqrt(std::max(0.0, r1));
    return g;
  };
  auto clamped_fn = m.diffusion_clamped;
  m.diffusion = [clamped_fn](const Vector& x, const Vector& xd) {
    bool clamped = false;
    Matrix g = clamped_fn(x, xd, &clamped);
    if (clamped)
      throw parameter_error(
          "toggle: negative radicand in the diffusion; state left the "
          "physical region");
    return g;
  };
  // d/du [beta/(1+u^2/k)] = -2 beta u / (k (1 + u^2/k)^2)
  auto dhill = [beta, k](double u) {
    const double s = 1.0 + u * u / k;
    return -2.0 * beta * u / (k * s * s);
  };
  m.drift_jac_present = [gamma](const Vector&, const Vector&) {
    return Matrix(-gamma * Matrix::Identity(2, 2));
  };
  m.drift_jac_delayed = [dhill](const Vector&, const Vector& xd) {
    Matrix c = Matrix::Zero(2, 2);
    c(0, 1) = dhill(xd(1));
    c(1, 0) = dhill(xd(0));
    return c;
  };
  return m;
}

enum class Stability { stable, saddle, unknown };

struct StationaryState {
  Vector z;
  double residual = 0.0;  ///< ||f(z,z)||
  Stability stability = Stability::unknown;
};

struct StationarySearch {
  std::vector<StationaryState> states;
  std::vector<Vector> failed_seeds;
};

namespace detail {

/// Central-difference Jacobian in the selected argument slot.
template <typename Fn>
Matrix central_jacobian(Fn&& fn, const Vector& at, Index dim) {
  const double h = 1e-6 * (1.0 + at.norm());
  Matrix jac(dim, dim);
  Vector lo = at, hi = at;
  for (Index j = 0; j < at.size(); ++j) {
    hi(j) += h;
    lo(j) -= h;
    jac.col(j) = (fn(hi) - fn(lo)) / (2.0 * h);
    hi(j) = at(j);
    lo(j) = at(j);
  }
  return jac;
}

inline bool stationary_residual_ok(const Vector& f, const Vector& z) {
  return f.norm() <= 1e-10 * (1.0 + z.norm());
}

/// Forward-Euler run of the deterministic delay flow from a perturbed start;
/// confirms attraction back to z. Advisory only.
inline bool flow_returns_to(const NonlinearDelayModel& model, const Vector& z) {
  const Index n_per_tau = 200;
  const double dt = model.tau / n_per_tau;
  const Index steps = 15 * n_per_tau;
  const double delta0 = 1e-3 * (1.0 + z.norm());
  Vector bump = Vector::Constant(z.size(), delta0 / std::sqrt(double(z.size())));
  std::vector<Vector> path;
  path.reserve(static_cast<std::size_t>(steps) + 1);
  path.push_back(z + bump);
  for (Index s = 0; s < steps; ++s) {
    const Vector& x = path.back();
    const Vector& xd =
        (s < n_per_tau) ? path.front() : path[static_cast<std::size_t>(s - n_per_tau)];
    Vector next = x + dt * model.drift(x, xd);
    if (!next.allFinite()) return false;
    path.push_back(next);
  }
  return (path.back() - z).norm() < delta0;
}

}  // namespace detail

/// Damped Newton on z -> f(z,z) with a finite-difference Jacobian
/// D1 f + D2 f; converged roots are deduplicated and classified. Seeds that
/// fail to converge within 200 iterations are recorded, not fatal.
inline StationarySearch find_stationary_states(const NonlinearDelayModel& model,
                                               const std::vector<Vector>& seeds) {
  detail::require(static_cast<bool>(model.drift), "stationary: model has no drift");
  StationarySearch out;
  auto fixed_drift = [&](const Vector& z) { return model.drift(z, z); };

  for (const Vector& seed : seeds) {
    detail::require(seed.size() == model.dim, "stationary: seed has wrong dimension");
    Vector z = seed;
    bool converged = false;
    for (int it = 0; it < 200; ++it) {
      const Vector f = fixed_drift(z);
      if (!f.allFinite()) break;
      if (detail::stationary_residual_ok(f, z)) {
        converged = true;
        break;
      }
      const Matrix jac = detail::central_jacobian(fixed_drift, z, model.dim);
      Eigen::FullPivLU<Matrix> lu(jac);
      if (!lu.isInvertible()) break;
      const Vector dir = lu.solve(-f);
      double alpha = 1.0;
      const double f0 = f.norm();
      Vector candidate = z + dir;
      while (alpha > 1e-10 && (!candidate.allFinite() ||
                               fixed_drift(candidate).norm() >= f0)) {
        alpha *= 0.5;
        candidate = z + alpha * dir;
      }
      if (alpha <= 1e-10) break;
      z = candidate;
    }
    const Vector f_final = fixed_drift(z);
    if (!converged || !detail::stationary_residual_ok(f_final, z)) {
      out.failed_seeds.push_back(seed);
      continue;
    }
    bool duplicate = false;
    for (const auto& s : out.states)
      if ((s.z - z).norm() <= 1e-6) duplicate = true;
    if (duplicate) continue;

    StationaryState state;
    state.z = z;
    state.residual = f_final.norm();
    // zero-frequency characteristic matrix B + C; advisory classification,
    // confirmed by a short run of the deterministic flow
    const Matrix B = model.drift_jac_present
                         ? model.drift_jac_present(z, z)
                         : detail::central_jacobian(
                               [&](const Vector& x) { return model.drift(x, z); },
                               z, model.dim);
    const Matrix C = model.drift_jac_delayed
                         ? model.drift_jac_delayed(z, z)
                         : detail::central_jacobian(
                               [&](const Vector& x) { return model.drift(z, x); },
                               z, model.dim);
    const double max_real =
        Eigen::EigenSolver<Matrix>(B + C).eigenvalues().real().maxCoeff();
    if (max_real < 0.0) {
      state.stability = detail::flow_returns_to(model, z) ? Stability::stable
                                                          : Stability::unknown;
    } else {
      state.stability = Stability::saddle;
    }
    out.states.push_back(std::move(state));
  }
  return out;
}

/// Linear noise approximation at a stationary state:
///   a = 0, B = D1 f(z,z), C = D2 f(z,z), Sigma = g(z,z), epsilon = 1/sqrt(N).
/// Closed-form Jacobians are used when the model provides them unless
/// force_finite_differences is set.
inline DelayModel build_lna(const NonlinearDelayModel& model,
                            const Vector& z,
                            bool force_finite_differences = false) {
  detail::require(z.size() == model.dim, "lna: state has wrong dimension");
  DelayModel lin;
  lin.a = Vector::Zero(model.dim);
  lin.tau = model.tau;
  lin.epsilon = model.noise_scale();
  try {
    if (!force_finite_differences && model.drift_jac_present &&
        model.drift_jac_delayed) {
      lin.B = model.drift_jac_present(z, z);
      lin.C = model.drift_jac_delayed(z, z);
    } else {
      lin.B = detail::central_jacobian(
          [&](const Vector& x) { return model.drift(x, z); }, z, model.dim);
      lin.C = detail::central_jacobian(
          [&](const Vector& x) { return model.drift(z, x); }, z, model.dim);
    }
    lin.Sigma = model.diffusion(z, z);
  } catch (const error&) {
    throw;
  } catch (const std::exception& e) {
    throw numeric_error(std::string("lna: evaluator failed: ") + e.what());
  }
  detail::require(lin.dims_consistent(), "lna: evaluators returned wrong shapes");
  return lin;
}

inline DelayModel build_lna(const NonlinearDelayModel& model,
                            const StationaryState& state,
                            bool force_finite_differences = false) {
  return build_lna(model, state.z, force_finite_differences);
}

}  // namespace dsde
