#include "spe/quasi_newton.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "spe/errors.hpp"

namespace spe {

std::vector<double> central_difference(const Objective& f, std::span<const double> x, double h) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

QuasiNewtonResult maximize_bfgs(const Objective& f, std::vector<double> x0,
                                const QuasiNewtonOptions& opts, Gradient grad) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  if (!grad) grad = [&](std::span<const double> x) { return central_difference(f, x, opts.fd_step); };
  const Eigen::Index n = static_cast<Eigen::Index>(x0.size());
  auto to_vec = [](const std::vector<double>& v) {
    return VectorXd(Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  auto to_std = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };

  QuasiNewtonResult res;
  VectorXd x = to_vec(x0);
  double fx = f(x0);
  if (!std::isfinite(fx)) throw NonFiniteObjective("objective is not finite at the starting point");
  VectorXd g = to_vec(grad(x0));
  // Inverse Hessian approximation of -f.
  MatrixXd H = MatrixXd::Identity(n, n);
  res.trace.push_back(fx);

  for (int k = 0; k < opts.max_iter; ++k) {
    res.grad_norm = g.lpNorm<Eigen::Infinity>();
    if (res.grad_norm <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    VectorXd dir = H * g;
    double slope = g.dot(dir);
    if (!(slope > 0.0)) {
      H.setIdentity();
      dir = g;
      slope = g.squaredNorm();
    }
    double step = 1.0;
    VectorXd x_new;
    double f_new = 0.0;
    bool accepted = false;
    for (int b = 0; b < opts.max_backtracks; ++b) {
      x_new = x + step * dir;
      f_new = f(to_std(x_new));
      if (std::isfinite(f_new) && f_new >= fx + opts.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const VectorXd g_new = to_vec(grad(to_std(x_new)));
    const VectorXd s = x_new - x;
    // Curvature pair for the minimization of -f.
    const VectorXd y = g - g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const MatrixXd I = MatrixXd::Identity(n, n);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    x = x_new;
    fx = f_new;
    g = g_new;
    res.trace.push_back(fx);
    res.iterations = k + 1;
  }
  res.grad_norm = g.lpNorm<Eigen::Infinity>();
  if (res.grad_norm <= opts.grad_tol) res.converged = true;
  res.x = to_std(x);
  res.value = fx;
  return res;
}

}  // namespace spe
