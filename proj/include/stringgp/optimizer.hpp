#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "stringgp/linalg.hpp"

namespace stringgp {

struct OptimizerConfig {
  int max_iterations = 200;
  double gradient_tol = 1e-6;
  double function_tol = 1e-10;
  double fd_step = 1e-5;
};

struct OptimizerResult {
  VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::string message;
};

// Central finite difference gradient. Non-finite probes fall back to a
// one-sided difference.
inline VectorXd numeric_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double fx,
                                 double h) {
  VectorXd g(x.size());
  VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    if (std::isfinite(fp) && std::isfinite(fm))
      g(i) = (fp - fm) / (2.0 * h);
    else if (std::isfinite(fp))
      g(i) = (fp - fx) / h;
    else if (std::isfinite(fm))
      g(i) = (fx - fm) / h;
    else
      g(i) = 0.0;
  }
  return g;
}

// Minimizes f by BFGS with a backtracking Armijo line search. Accepted steps
// never increase f; the best iterate is always returned.
inline OptimizerResult minimize_bfgs(const std::function<double(const VectorXd&)>& f, VectorXd x,
                                     const OptimizerConfig& cfg = {}) {
  const Eigen::Index n = x.size();
  OptimizerResult r;
  double fx = f(x);
  if (!std::isfinite(fx)) {
    r.x = x;
    r.message = "objective not finite at the initial point";
    return r;
  }
  VectorXd g = numeric_gradient(f, x, fx, cfg.fd_step);
  MatrixXd H = MatrixXd::Identity(n, n);
  if (g.norm() > 0) H *= std::min(1.0, 1.0 / g.norm());
  for (r.iterations = 0; r.iterations < cfg.max_iterations; ++r.iterations) {
    if (g.lpNorm<Eigen::Infinity>() < cfg.gradient_tol) {
      r.converged = true;
      r.message = "gradient tolerance reached";
      break;
    }
    VectorXd p = -H * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      H = MatrixXd::Identity(n, n);
      p = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    double fnew = fx;
    VectorXd xnew = x;
    bool ok = false;
    for (int ls = 0; ls < 40; ++ls) {
      xnew = x + step * p;
      fnew = f(xnew);
      if (std::isfinite(fnew) && fnew <= fx + 1e-4 * step * slope) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      r.line_search_failed = true;
      r.message = "line search failed";
      break;
    }
    const VectorXd gnew = numeric_gradient(f, xnew, fnew, cfg.fd_step);
    const VectorXd s = xnew - x, y = gnew - g;
    const double sy = s.dot(y);
    const double decrease = fx - fnew;
    x = xnew;
    g = gnew;
    fx = fnew;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const MatrixXd I = MatrixXd::Identity(n, n);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    if (decrease < cfg.function_tol * (1.0 + std::abs(fx))) {
      r.converged = true;
      r.message = "function tolerance reached";
      break;
    }
  }
  r.x = x;
  r.value = fx;
  return r;
}

}  // namespace stringgp
