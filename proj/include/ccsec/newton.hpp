#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>

#include "ccsec/core.hpp"

namespace ccsec {

struct NewtonOptions {
  double tol = 1e-9;       // max |mean residual|
  double step_tol = 1e-9;  // max |delta theta|
  int max_iter = 100;
  int max_halvings = 30;
};

struct NewtonResult {
  VectorXd x;
  int iterations = 0;
  bool converged = false;
};

namespace detail {
inline bool finite(const VectorXd& v) { return v.allFinite(); }
}  // namespace detail

/// Newton-Raphson with step-halving on a square residual system.
/// `residual` returns the mean estimating equations, `jacobian` their
/// derivative; both are evaluated at arbitrary points near `start`.
inline NewtonResult newton_solve(
    const std::function<VectorXd(const VectorXd&)>& residual,
    const std::function<MatrixXd(const VectorXd&)>& jacobian,
    const VectorXd& start, const NewtonOptions& opts = {},
    const std::string& stage = "newton") {
  VectorXd x = start;
  VectorXd f = residual(x);
  if (!detail::finite(f))
    throw convergence_error(stage, "non-finite residual at start");

  NewtonResult out;
  for (out.iterations = 0; out.iterations < opts.max_iter; ++out.iterations) {
    if (f.cwiseAbs().maxCoeff() < opts.tol) {
      out.converged = true;
      break;
    }
    MatrixXd J = jacobian(x);
    if (!J.allFinite())
      throw convergence_error(stage, "non-finite Jacobian");
    Eigen::PartialPivLU<MatrixXd> lu(J);
    VectorXd step = lu.solve(-f);
    if (!detail::finite(step) ||
        (J * step + f).cwiseAbs().maxCoeff() >
            1e-6 * std::max(1.0, f.cwiseAbs().maxCoeff()))
      throw convergence_error(stage, "singular Jacobian");

    const double f0 = f.norm();
    double t = 1.0;
    VectorXd x_new, f_new;
    bool improved = false;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      x_new = x + t * step;
      f_new = residual(x_new);
      if (detail::finite(f_new) && f_new.norm() < f0) {
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) {
      // no descent direction left; accept only if already at the root
      if (f0 < opts.tol) {
        out.converged = true;
        break;
      }
      throw convergence_error(stage, "step-halving failed to reduce the residual");
    }
    const double dx = (t * step).cwiseAbs().maxCoeff();
    x = x_new;
    f = f_new;
    if (dx < opts.step_tol) {
      ++out.iterations;
      out.converged = f.cwiseAbs().maxCoeff() < opts.tol || dx < opts.step_tol;
      break;
    }
  }
  if (!out.converged && f.cwiseAbs().maxCoeff() < opts.tol) out.converged = true;
  if (!out.converged)
    throw convergence_error(stage, "no convergence after " +
                                       std::to_string(out.iterations) +
                                       " iterations");
  out.x = x;
  return out;
}

}  // namespace ccsec
