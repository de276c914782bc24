#pragma once

// Large-deviations toolkit for linear (Gaussian) delay SDEs: mean/covariance
// delay-ODE solvers, rate functionals and optimal transition paths, disk-exit
// optimization, linear noise approximations, and Euler-Maruyama ensembles.

#include "dsde/config.hpp"
#include "dsde/csv.hpp"
#include "dsde/escape.hpp"
#include "dsde/lna.hpp"
#include "dsde/model.hpp"
#include "dsde/montecarlo.hpp"
#include "dsde/rate.hpp"
#include "dsde/steps.hpp"
#include "dsde/svg.hpp"
#include "dsde/version.hpp"
