#pragma once

#include <functional>
#include <span>
#include <vector>

namespace spe {

using Objective = std::function<double(std::span<const double>)>;
using Gradient = std::function<std::vector<double>(std::span<const double>)>;

// Central differences with a common step h.
std::vector<double> central_difference(const Objective& f, std::span<const double> x, double h);

struct QuasiNewtonOptions {
  double grad_tol = 1e-6;  // on the infinity norm of the gradient
  int max_iter = 200;
  double fd_step = 1e-5;
  double armijo = 1e-4;
  int max_backtracks = 40;
};

struct QuasiNewtonResult {
  std::vector<double> x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after every accepted step, starting value first
};

// BFGS ascent with an Armijo backtracking line search. Non-finite trial
// values are rejected by the line search. When `grad` is empty the gradient
// comes from central differences of `f`. Returns the best iterate even
// without convergence; the caller decides how to flag it.
QuasiNewtonResult maximize_bfgs(const Objective& f, std::vector<double> x0,
                                const QuasiNewtonOptions& opts = {}, Gradient grad = {});

}  // namespace spe
