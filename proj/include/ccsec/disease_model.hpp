#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "ccsec/core.hpp"
#include "ccsec/newton.hpp"

namespace ccsec {

// Disease model on the case-control scale: unweighted logistic regression of
// D on x_dis. Population-scale probabilities are recovered afterwards through
// the known-prevalence offset
//   logit p(X) = logit p_cc(X) + log[ q(1-c) / (c(1-q)) ],  c = n1/n.

struct DiseaseModelFit {
  VectorXd alpha;          // logistic coefficients, case-control scale
  double case_fraction;    // c = n1/n of the fitted sample
  MatrixXd score_contribs; // n x s, V_i(alpha) = x_i (d_i - expit(alpha'x_i))
  MatrixXd neg_jacobian;   // s x s, Ehat{-dV/dalpha} = Ehat[x x' pcc(1-pcc)]
  bool converged = false;
  int iterations = 0;

  double offset(const CaseControlDesign& design) const {
    const double q = design.prevalence;
    return std::log(q * (1.0 - case_fraction) /
                    (case_fraction * (1.0 - q)));
  }

  VectorXd cc_prob(const MatrixXd& x_dis) const {
    return (x_dis * alpha).unaryExpr([](double e) { return expit(e); });
  }
};

inline DiseaseModelFit fit_cc_logistic(const MatrixXd& x_dis, const VectorXd& d) {
  const std::string stage = "disease_model";
  require_full_rank(x_dis, stage);
  const Index n = d.size();
  const Index s = x_dis.cols();
  Index n1 = 0;
  for (Index i = 0; i < n; ++i) {
    if (d[i] == 1.0)
      ++n1;
    else if (d[i] != 0.0)
      throw invalid_dataset("disease indicator must be 0 or 1");
  }
  if (n1 == 0 || n1 == n)
    throw degenerate_design(stage, "need both classes to fit the disease model");

  VectorXd alpha = VectorXd::Zero(s);
  bool converged = false;
  int it = 0;
  double last_step = 0.0;
  for (; it < 100; ++it) {
    VectorXd pcc = (x_dis * alpha).unaryExpr([](double e) { return expit(e); });
    VectorXd score = x_dis.transpose() * (d - pcc);
    VectorXd wgt = pcc.array() * (1.0 - pcc.array());
    MatrixXd info = x_dis.transpose() * wgt.asDiagonal() * x_dis;
    Eigen::LDLT<MatrixXd> ldlt(info);
    VectorXd step = ldlt.solve(score);
    if (!step.allFinite())
      throw convergence_error(stage, "singular information matrix");

    // step-halving on the deviance surrogate |score|
    const double s0 = score.norm();
    double t = 1.0;
    for (int h = 0; h < 30; ++h) {
      VectorXd cand = alpha + t * step;
      VectorXd pc = (x_dis * cand).unaryExpr([](double e) { return expit(e); });
      if ((x_dis.transpose() * (d - pc)).norm() < s0) break;
      t *= 0.5;
    }
    alpha += t * step;
    last_step = (t * step).cwiseAbs().maxCoeff();
    VectorXd pcc_new = (x_dis * alpha).unaryExpr([](double e) { return expit(e); });
    const double score_scale =
        (x_dis.transpose() * (d - pcc_new)).cwiseAbs().maxCoeff() /
        static_cast<double>(n);
    if (last_step < 1e-10 || score_scale < 1e-12) {
      converged = true;
      ++it;
      break;
    }
  }
  if (!converged)
    throw convergence_error(stage, "logistic fit did not converge");

  // Quasi-separation: fitted probabilities pinned at 0/1 while the
  // coefficients were still growing (the score vanished by saturation, not at
  // an interior optimum).
  VectorXd pcc = (x_dis * alpha).unaryExpr([](double e) { return expit(e); });
  const double extreme =
      std::min(pcc.minCoeff(), (1.0 - pcc.array()).minCoeff());
  if (extreme < 1e-10 && (alpha.norm() > 1e3 || last_step > 1e-6))
    throw separation_error("quasi-separation detected (fitted probabilities at 0/1)");

  DiseaseModelFit fit;
  fit.alpha = alpha;
  fit.case_fraction = static_cast<double>(n1) / static_cast<double>(n);
  fit.score_contribs = x_dis.array().colwise() * (d - pcc).array();
  VectorXd wgt = pcc.array() * (1.0 - pcc.array());
  fit.neg_jacobian =
      x_dis.transpose() * wgt.asDiagonal() * x_dis / static_cast<double>(n);
  fit.converged = true;
  fit.iterations = it;
  return fit;
}

/// Population-scale disease probabilities p(X) = expit(alpha'x + kappa).
inline VectorXd population_disease_prob(const DiseaseModelFit& fit,
                                        const MatrixXd& x_dis,
                                        const CaseControlDesign& design) {
  if (x_dis.cols() != fit.alpha.size())
    throw rank_error("disease_model", "column count does not match the fit");
  const double kappa = fit.offset(design);
  return (x_dis * fit.alpha).unaryExpr(
      [kappa](double e) { return expit(e + kappa); });
}

}  // namespace ccsec
