#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "ccsec/core.hpp"
#include "ccsec/disease_model.hpp"
#include "ccsec/glm.hpp"
#include "ccsec/newton.hpp"

namespace ccsec {

struct FitOptions {
  NewtonOptions newton;
  bool update_h1 = false;        // re-estimate h1 each iteration (off: frozen at start)
  double max_condition = 1e12;   // abort threshold for the joint Jacobian
  double nu_start_clip = 20.0;   // clip for log-link starting log-ratios
};

// ---------------------------------------------------------------------------
// nu-bar: log E[exp{nu(X, D)} | X] over the population law of D given X,
// with nu(X,0) = 0 and nu(X,1) = delta'x_sel.
// ---------------------------------------------------------------------------

namespace detail {

// log(p * e^u + (1 - p)), computed as logsumexp(log p + u, log(1-p)).
inline double log_mix_exp(double u, double p) {
  const double a = std::log(p) + u;
  const double b = std::log1p(-p);
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// rho = p e^u / (p e^u + 1 - p) = expit(u + logit(p))
inline double mix_weight(double u, double p) { return expit(u + logit(p)); }

}  // namespace detail

inline double nu_bar(const VectorXd& delta, const VectorXd& x_sel_row, double p) {
  return detail::log_mix_exp(delta.dot(x_sel_row), p);
}

// ---------------------------------------------------------------------------
// Control-function residual. Identity link:
//   y - x_mean b - (x_sel d)(D - p)
// Log link:
//   y - exp(x_mean b + D (x_sel d) - nu_bar)
// theta is (beta, delta) split by the design column counts.
// ---------------------------------------------------------------------------

inline VectorXd cont_residual(const VectorXd& theta, const Dataset& data,
                              Link link, const VectorXd& p_hat) {
  const Index n = data.n(), q = data.q(), r = data.r();
  const VectorXd beta = theta.head(q);
  const VectorXd delta = theta.tail(r);
  const VectorXd eta = data.x_mean * beta;
  const VectorXd u = data.x_sel * delta;
  VectorXd resid(n);
  if (link == Link::Identity) {
    for (Index i = 0; i < n; ++i)
      resid[i] = data.y[i] - eta[i] - u[i] * (data.d[i] - p_hat[i]);
  } else {
    for (Index i = 0; i < n; ++i) {
      const double nb = detail::log_mix_exp(u[i], p_hat[i]);
      resid[i] = data.y[i] - std::exp(eta[i] + data.d[i] * u[i] - nb);
    }
  }
  return resid;
}

/// d/dtheta of g^{-1}(mu~(X, D; theta)) rowwise: the n x (q+r) derivative
/// stack of the conditional mean, at each subject's own D.
inline MatrixXd mu_tilde_derivative(const VectorXd& theta, const Dataset& data,
                                    Link link, const VectorXd& p_hat) {
  const Index n = data.n(), q = data.q(), r = data.r();
  MatrixXd stack(n, q + r);
  if (link == Link::Identity) {
    stack.leftCols(q) = data.x_mean;
    for (Index i = 0; i < n; ++i)
      stack.row(i).tail(r) = data.x_sel.row(i) * (data.d[i] - p_hat[i]);
  } else {
    const VectorXd eta = data.x_mean * theta.head(q);
    const VectorXd u = data.x_sel * theta.tail(r);
    for (Index i = 0; i < n; ++i) {
      const double nb = detail::log_mix_exp(u[i], p_hat[i]);
      const double m = std::exp(eta[i] + data.d[i] * u[i] - nb);
      const double rho = detail::mix_weight(u[i], p_hat[i]);
      stack.row(i).head(q) = m * data.x_mean.row(i);
      stack.row(i).tail(r) = m * (data.d[i] - rho) * data.x_sel.row(i);
    }
  }
  return stack;
}

// ---------------------------------------------------------------------------
// Optimal weighting function h1. Row i:
//   [ sum_d var(Y|X_i,d) w(d) P(D=d|X_i) ]^{-1} * d/dtheta g^{-1}(mu~(X_i,D_i))
// Identity link uses the pooled homoscedastic per-class variance at theta0;
// log link uses the predicted means as a Poisson working variance.
// ---------------------------------------------------------------------------

inline MatrixXd h1_opt(const VectorXd& theta0, const Dataset& data, Link link,
                       const VectorXd& p_hat, const CaseControlDesign& design) {
  const Index n = data.n(), q = data.q(), r = data.r();
  const double w1 = design.case_weight();
  const double w0 = design.control_weight();
  const VectorXd eta = data.x_mean * theta0.head(q);
  const VectorXd u = data.x_sel * theta0.tail(r);

  VectorXd bracket(n);
  if (link == Link::Identity) {
    double s2[2] = {0.0, 0.0};
    for (int dd = 0; dd < 2; ++dd) {
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double res = data.y[i] - eta[i] - u[i] * (dd - p_hat[i]);
        acc += res * res;
      }
      s2[dd] = acc / static_cast<double>(n);
    }
    if (s2[0] <= 0.0 || s2[1] <= 0.0)
      throw degenerate_design("h1_opt", "non-positive variance estimate");
    for (Index i = 0; i < n; ++i)
      bracket[i] = s2[1] * w1 * p_hat[i] + s2[0] * w0 * (1.0 - p_hat[i]);
  } else {
    for (Index i = 0; i < n; ++i) {
      const double nb = detail::log_mix_exp(u[i], p_hat[i]);
      const double m1 = std::exp(eta[i] + u[i] - nb);
      const double m0 = std::exp(eta[i] - nb);
      if (!std::isfinite(m1) || !std::isfinite(m0))
        throw convergence_error("h1_opt", "divergent predicted mean");
      bracket[i] = m1 * w1 * p_hat[i] + m0 * w0 * (1.0 - p_hat[i]);
      if (bracket[i] <= 0.0)
        throw degenerate_design("h1_opt", "non-positive variance estimate");
    }
  }

  MatrixXd h1 = mu_tilde_derivative(theta0, data, link, p_hat);
  h1.array().colwise() /= bracket.array();
  return h1;
}

// ---------------------------------------------------------------------------
// Joint estimating-equation system for theta = (beta, delta).
// ---------------------------------------------------------------------------

struct JointSystem {
  VectorXd theta;
  MatrixXd h1;                // n x (q+r), held fixed
  VectorXd p_hat;
  MatrixXd residual_contribs; // n x (q+r), rows U_i'
  MatrixXd dU_dtheta;         // (q+r) x (q+r)
  MatrixXd dU_dalpha;         // (q+r) x s
  double condition_number = 0.0;
};

inline JointSystem make_joint_system(const VectorXd& theta, const Dataset& data,
                                     Link link, const CaseControlDesign& design,
                                     const VectorXd& p_hat, const MatrixXd& h1) {
  const Index n = data.n(), q = data.q(), r = data.r();
  const VectorXd w = compute_weights(design, data.d);
  const VectorXd resid = cont_residual(theta, data, link, p_hat);
  const MatrixXd stack = mu_tilde_derivative(theta, data, link, p_hat);

  JointSystem sys;
  sys.theta = theta;
  sys.h1 = h1;
  sys.p_hat = p_hat;
  sys.residual_contribs = h1.array().colwise() * (w.array() * resid.array());
  sys.dU_dtheta = -(h1.transpose() * w.asDiagonal() * stack) /
                  static_cast<double>(n);

  // dU/dalpha differentiates through p(X; alpha) only (h1 is a fixed weight).
  VectorXd dr_dp(n);
  if (link == Link::Identity) {
    dr_dp = data.x_sel * theta.tail(r);
  } else {
    const VectorXd eta = data.x_mean * theta.head(q);
    const VectorXd u = data.x_sel * theta.tail(r);
    for (Index i = 0; i < n; ++i) {
      const double nb = detail::log_mix_exp(u[i], p_hat[i]);
      const double m = std::exp(eta[i] + data.d[i] * u[i] - nb);
      dr_dp[i] = m * std::expm1(u[i]) * std::exp(-nb);
    }
  }
  VectorXd scale = w.array() * dr_dp.array() * p_hat.array() *
                   (1.0 - p_hat.array());
  sys.dU_dalpha = (h1.transpose() * scale.asDiagonal() * data.x_dis) /
                  static_cast<double>(n);

  Eigen::JacobiSVD<MatrixXd> svd(sys.dU_dtheta);
  const double smin = svd.singularValues().minCoeff();
  sys.condition_number =
      smin > 0.0 ? svd.singularValues().maxCoeff() / smin
                 : std::numeric_limits<double>::infinity();
  return sys;
}

// ---------------------------------------------------------------------------
// Sandwich covariance with the disease-model correction (B.6):
//   phi_i = U_i - Ehat[dU/da] Ehat[dV/da]^{-1} V_i,   Ehat[dV/da] = -neg_jacobian
//   Sigma = A^{-1} (n^{-1} sum phi phi') A^{-T} / n,  A = Ehat[dU/dtheta]
// The overload without a disease fit drops the correction (known p(X) path).
// ---------------------------------------------------------------------------

inline MatrixXd sandwich_covariance(const JointSystem& sys,
                                    const DiseaseModelFit* dfit) {
  const Index n = sys.residual_contribs.rows();
  MatrixXd phi = sys.residual_contribs;
  if (dfit) {
    Eigen::LDLT<MatrixXd> ldlt(dfit->neg_jacobian);
    if (ldlt.info() != Eigen::Success)
      throw rank_error("sandwich", "singular disease-model Jacobian");
    // U_i + dU/da * neg_jacobian^{-1} * V_i
    phi += dfit->score_contribs * ldlt.solve(sys.dU_dalpha.transpose());
  }
  const MatrixXd b = phi.transpose() * phi / static_cast<double>(n);
  Eigen::PartialPivLU<MatrixXd> lu(sys.dU_dtheta);
  const MatrixXd ainv = lu.inverse();
  if (!ainv.allFinite()) throw rank_error("sandwich", "singular system Jacobian");
  return ainv * b * ainv.transpose() / static_cast<double>(n);
}

inline MatrixXd sandwich_covariance(const JointSystem& sys,
                                    const DiseaseModelFit& dfit) {
  return sandwich_covariance(sys, &dfit);
}

inline MatrixXd sandwich_covariance(const JointSystem& sys) {
  return sandwich_covariance(sys, nullptr);
}

// ---------------------------------------------------------------------------
// IPW estimator: solves sum_i w_i x_i [y_i - g^{-1}(x_i'beta)] = 0 with the
// robust sandwich covariance.
// ---------------------------------------------------------------------------

inline EstimateResult fit_ipw(const Dataset& data, Link link,
                              const CaseControlDesign& design,
                              const FitOptions& opts = {}) {
  data.validate_for(link);
  require_full_rank(data.x_mean, "ipw");
  const VectorXd w = compute_weights(design, data.d);

  EstimateResult out;
  out.tag = EstimatorTag::IPW;
  out.beta = glm_fit(link, data.x_mean, data.y, w, &out.iterations, "ipw");
  out.converged = true;
  out.covariance = glm_sandwich(link, data.x_mean, data.y, w, out.beta);
  out.std_errors = out.covariance.diagonal().cwiseSqrt();
  return out;
}

// ---------------------------------------------------------------------------
// Naive estimators: unweighted GLMs with robust covariance.
// ---------------------------------------------------------------------------

inline EstimateResult fit_naive_pooled(const Dataset& data, Link link) {
  data.validate_for(link);
  require_full_rank(data.x_mean, "pooled");
  const VectorXd ones = VectorXd::Ones(data.n());
  EstimateResult out;
  out.tag = EstimatorTag::Pooled;
  out.beta = glm_fit(link, data.x_mean, data.y, ones, &out.iterations, "pooled");
  out.converged = true;
  out.covariance = glm_sandwich(link, data.x_mean, data.y, ones, out.beta);
  out.std_errors = out.covariance.diagonal().cwiseSqrt();
  return out;
}

/// Regression on [x_mean | d]; the d coefficient stays in the fit and its
/// covariance bookkeeping but is excluded from the reported beta block.
inline EstimateResult fit_naive_dind(const Dataset& data, Link link) {
  data.validate_for(link);
  const Index n = data.n(), q = data.q();
  MatrixXd x(n, q + 1);
  x.leftCols(q) = data.x_mean;
  x.col(q) = data.d;
  require_full_rank(x, "dind");
  const VectorXd ones = VectorXd::Ones(n);
  EstimateResult out;
  out.tag = EstimatorTag::Dind;
  VectorXd full = glm_fit(link, x, data.y, ones, &out.iterations, "dind");
  MatrixXd cov = glm_sandwich(link, x, data.y, ones, full);
  out.beta = full.head(q);
  out.covariance = cov.topLeftCorner(q, q);
  out.std_errors = out.covariance.diagonal().cwiseSqrt();
  out.converged = true;
  return out;
}

// ---------------------------------------------------------------------------
// Control-function estimator (identity or log link), Appendix-C recipe:
// disease model -> starting values -> frozen h1 -> Newton-Raphson on the
// joint system -> alpha-corrected sandwich.
// ---------------------------------------------------------------------------

namespace detail {

inline VectorXd starting_delta(const Dataset& data, Link link,
                               const FitOptions& opts) {
  const Index n = data.n();
  const Index n1 = static_cast<Index>(data.d.sum());
  const Index n0 = n - n1;
  MatrixXd x1(n1, data.q()), x0(n0, data.q());
  VectorXd y1(n1), y0(n0);
  for (Index i = 0, i1 = 0, i0 = 0; i < n; ++i) {
    if (data.d[i] == 1.0) {
      x1.row(i1) = data.x_mean.row(i);
      y1[i1++] = data.y[i];
    } else {
      x0.row(i0) = data.x_mean.row(i);
      y0[i0++] = data.y[i];
    }
  }
  const VectorXd b1 = glm_fit(link, x1, y1, VectorXd::Ones(n1), nullptr,
                              "cont-start");
  const VectorXd b0 = glm_fit(link, x0, y0, VectorXd::Ones(n0), nullptr,
                              "cont-start");
  // identity: difference of class predictions; log: their log-ratio
  VectorXd target = data.x_mean * (b1 - b0);
  if (link == Link::Log) {
    const double clip = opts.nu_start_clip;
    target = target.cwiseMax(-clip).cwiseMin(clip);
  }
  return ols_fit(data.x_sel, target, "cont-start");
}

}  // namespace detail

inline EstimateResult fit_cont(const Dataset& data, Link link,
                               const CaseControlDesign& design,
                               const FitOptions& opts = {}) {
  data.validate_for(link);
  require_full_rank(data.x_mean, "cont");
  require_full_rank(data.x_sel, "cont");
  const Index n = data.n(), q = data.q(), r = data.r();
  const VectorXd w = compute_weights(design, data.d);

  const DiseaseModelFit dfit = fit_cc_logistic(data.x_dis, data.d);
  const VectorXd p_hat = population_disease_prob(dfit, data.x_dis, design);

  VectorXd theta0(q + r);
  theta0.head(q) = fit_ipw(data, link, design, opts).beta;
  theta0.tail(r) = detail::starting_delta(data, link, opts);

  MatrixXd h1 = h1_opt(theta0, data, link, p_hat, design);

  VectorXd theta_cur = theta0;  // tracks the iterate for update_h1
  auto residual = [&](const VectorXd& th) -> VectorXd {
    const VectorXd resid = cont_residual(th, data, link, p_hat);
    return h1.transpose() * (w.array() * resid.array()).matrix() /
           static_cast<double>(n);
  };
  auto jacobian = [&](const VectorXd& th) -> MatrixXd {
    if (opts.update_h1 && (th - theta_cur).cwiseAbs().maxCoeff() > 0.0) {
      h1 = h1_opt(th, data, link, p_hat, design);
      theta_cur = th;
    }
    const MatrixXd stack = mu_tilde_derivative(th, data, link, p_hat);
    return -(h1.transpose() * w.asDiagonal() * stack) / static_cast<double>(n);
  };

  NewtonResult nr = newton_solve(residual, jacobian, theta0, opts.newton, "cont");

  JointSystem sys = make_joint_system(nr.x, data, link, design, p_hat, h1);
  if (sys.condition_number > opts.max_condition)
    throw rank_error("cont", "ill-conditioned system Jacobian (cond=" +
                                 std::to_string(sys.condition_number) + ")");

  EstimateResult out;
  out.tag = link == Link::Identity ? EstimatorTag::ContIdentity
                                   : EstimatorTag::ContLog;
  out.beta = nr.x.head(q);
  out.delta = nr.x.tail(r);
  out.alpha = dfit.alpha;
  out.covariance = sandwich_covariance(sys, dfit);
  out.std_errors = out.covariance.diagonal().cwiseSqrt();
  out.converged = nr.converged;
  out.iterations = nr.iterations;
  return out;
}

}  // namespace ccsec
