#pragma once

#include <stdexcept>
#include <string>

namespace dsde {

/// Base class for all errors thrown by this library.
struct error : std::runtime_error {
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid argument, malformed input, or a value outside its documented domain.
struct parameter_error : error {
  explicit parameter_error(const std::string& what) : error(what) {}
};

/// Numerical failure: singular step matrix, ill-conditioned covariance,
/// rank-deficient diffusion, diverging iteration.
struct numeric_error : error {
  explicit numeric_error(const std::string& what) : error(what) {}
};

/// Malformed or incomplete run configuration.
struct config_error : error {
  explicit config_error(const std::string& what) : error(what) {}
};

}  // namespace dsde
