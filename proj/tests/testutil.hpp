#pragma once

// Shared helpers for the test suites: seeded toy datasets, central finite
// differences, and a derivative-free Broyden root finder used as an oracle.

#include <cmath>
#include <functional>
#include <random>

#include "ccsec/core.hpp"
#include "ccsec/simulation.hpp"

namespace testutil {

using ccsec::Dataset;
using ccsec::Index;
using ccsec::MatrixXd;
using ccsec::VectorXd;

// Small seeded case-control dataset drawn from the two-covariate design.
inline ccsec::Population make_population(std::uint64_t seed, Index n,
                                         ccsec::Link link = ccsec::Link::Identity) {
  ccsec::ScenarioConfig cfg = link == ccsec::Link::Identity
                                  ? ccsec::make_identity_two_cov()
                                  : ccsec::make_log_poisson();
  std::mt19937_64 rng(seed);
  return ccsec::generate_population(cfg.gen, n, rng);
}

inline Dataset make_cc_dataset(std::uint64_t seed, Index n_pop, Index n1,
                               Index n0,
                               ccsec::Link link = ccsec::Link::Identity,
                               double* prevalence = nullptr) {
  auto pop = make_population(seed, n_pop, link);
  if (prevalence) *prevalence = pop.prevalence;
  return ccsec::sample_case_control(pop.data, n1, n0, seed + 17);
}

// Central finite differences of a vector-valued function, column j = df/dx_j.
inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f,
                            const VectorXd& x, double h = 1e-5) {
  const Index m = f(x).size();
  MatrixXd jac(m, x.size());
  for (Index j = 0; j < x.size(); ++j) {
    const double step = h * std::max(1.0, std::abs(x[j]));
    VectorXd hi = x, lo = x;
    hi[j] += step;
    lo[j] -= step;
    jac.col(j) = (f(hi) - f(lo)) / (2.0 * step);
  }
  return jac;
}

inline double rel_err(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).norm() / std::max(1.0, a.norm());
}

// Broyden's method (good-update), derivative-free; used as an independent
// root-finding oracle against the analytic Newton path.
inline VectorXd broyden_solve(const std::function<VectorXd(const VectorXd&)>& f,
                              const VectorXd& start, double tol = 1e-12,
                              int max_iter = 400) {
  VectorXd x = start;
  VectorXd fx = f(x);
  MatrixXd binv = fd_jacobian(f, x).inverse();  // seed only; updates are secant
  for (int it = 0; it < max_iter; ++it) {
    if (fx.cwiseAbs().maxCoeff() < tol) break;
    const VectorXd step = -binv * fx;
    double t = 1.0;
    VectorXd x_new, f_new;
    for (int h = 0; h < 40; ++h) {
      x_new = x + t * step;
      f_new = f(x_new);
      if (f_new.allFinite() && f_new.norm() < fx.norm()) break;
      t *= 0.5;
    }
    const VectorXd s = x_new - x;
    const VectorXd dy = f_new - fx;
    const VectorXd bs = binv * dy;
    binv += (s - bs) * (s.transpose() * binv) / (s.dot(bs));
    x = x_new;
    fx = f_new;
  }
  return x;
}

}  // namespace testutil
