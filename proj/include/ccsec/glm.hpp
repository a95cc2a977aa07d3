#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "ccsec/core.hpp"
#include "ccsec/newton.hpp"

namespace ccsec {

// Weighted least squares: solves X'W X b = X'W y.
inline VectorXd wls_fit(const MatrixXd& x, const VectorXd& y, const VectorXd& w,
                        const std::string& stage = "wls") {
  require_full_rank(x, stage);
  const MatrixXd xtw = x.transpose() * w.asDiagonal();
  Eigen::LDLT<MatrixXd> ldlt(xtw * x);
  VectorXd b = ldlt.solve(xtw * y);
  if (!b.allFinite()) throw rank_error(stage, "normal equations are singular");
  return b;
}

inline VectorXd ols_fit(const MatrixXd& x, const VectorXd& y,
                        const std::string& stage = "ols") {
  return wls_fit(x, y, VectorXd::Ones(y.size()), stage);
}

// Weighted Poisson regression (log link), Newton-Raphson on the score.
inline VectorXd poisson_fit(const MatrixXd& x, const VectorXd& y,
                            const VectorXd& w, int* iterations = nullptr,
                            const std::string& stage = "poisson") {
  require_full_rank(x, stage);
  const Index n = y.size();
  auto residual = [&](const VectorXd& b) -> VectorXd {
    VectorXd m = (x * b).array().exp().matrix();
    return x.transpose() * (w.array() * (y - m).array()).matrix() /
           static_cast<double>(n);
  };
  auto jacobian = [&](const VectorXd& b) -> MatrixXd {
    VectorXd m = (x * b).array().exp().matrix();
    return -(x.transpose() * (w.array() * m.array()).matrix().asDiagonal() * x) /
           static_cast<double>(n);
  };
  VectorXd start = VectorXd::Zero(x.cols());
  const double ybar = std::max((w.array() * y.array()).sum() / w.sum(), 1e-8);
  // assumes column 0 is the intercept when present; harmless otherwise
  start[0] = std::log(ybar);
  NewtonOptions opts;
  NewtonResult res = newton_solve(residual, jacobian, start, opts, stage);
  if (iterations) *iterations = res.iterations;
  return res.x;
}

inline VectorXd glm_fit(Link link, const MatrixXd& x, const VectorXd& y,
                        const VectorXd& w, int* iterations = nullptr,
                        const std::string& stage = "glm") {
  if (link == Link::Identity) {
    if (iterations) *iterations = 1;
    return wls_fit(x, y, w, stage);
  }
  return poisson_fit(x, y, w, iterations, stage);
}

/// Robust (sandwich) covariance of a weighted GLM fit:
/// A^{-1} B A^{-T} / n with A = -Ehat[w m'(eta) x x'], B = Ehat[U U'].
inline MatrixXd glm_sandwich(Link link, const MatrixXd& x, const VectorXd& y,
                             const VectorXd& w, const VectorXd& beta) {
  const Index n = y.size();
  VectorXd m = link_inverse(link, x * beta);
  VectorXd mprime =
      link == Link::Identity ? VectorXd::Ones(n) : m;  // d g^{-1}/d eta
  VectorXd r = y - m;
  MatrixXd u = x.array().colwise() * (w.array() * r.array());
  MatrixXd a = -(x.transpose() *
                 (w.array() * mprime.array()).matrix().asDiagonal() * x) /
               static_cast<double>(n);
  MatrixXd b = u.transpose() * u / static_cast<double>(n);
  MatrixXd ainv = a.inverse();
  return ainv * b * ainv.transpose() / static_cast<double>(n);
}

}  // namespace ccsec
