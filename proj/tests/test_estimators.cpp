#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ccsec/estimators.hpp"
#include "ccsec/simulation.hpp"
#include "testutil.hpp"

using namespace ccsec;

namespace {

void check_result_invariants(const EstimateResult& res) {
  const MatrixXd& cov = res.covariance;
  REQUIRE((cov - cov.transpose()).cwiseAbs().maxCoeff() <=
          1e-10 * std::max(1.0, cov.cwiseAbs().maxCoeff()));
  for (Index j = 0; j < res.std_errors.size(); ++j)
    REQUIRE(res.std_errors[j] == Catch::Approx(std::sqrt(cov(j, j))));
  // PSD up to numerical noise
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  REQUIRE(eig.eigenvalues().minCoeff() >= -1e-8 * cov.trace());
}

Dataset toy_dataset() {
  Dataset ds;
  ds.y.resize(6);
  ds.y << 3.1, 4.5, 2.2, 5.9, 4.1, 3.3;
  ds.d.resize(6);
  ds.d << 1, 0, 0, 1, 0, 0;
  ds.x_mean.resize(6, 2);
  ds.x_mean << 1, 0.5, 1, 1.0, 1, -0.3, 1, 2.0, 1, 0.9, 1, 0.1;
  ds.x_sel = ds.x_mean;
  ds.x_dis = ds.x_mean;
  return ds;
}

}  // namespace

TEST_CASE("IPW with equal weights reduces to OLS") {
  Dataset ds = toy_dataset();
  // q equal to the sample case fraction makes both weights 1
  CaseControlDesign design = CaseControlDesign::from_sample(ds.d, 2.0 / 6.0);
  EstimateResult res = fit_ipw(ds, Link::Identity, design);
  VectorXd ols = (ds.x_mean.transpose() * ds.x_mean)
                     .ldlt()
                     .solve(ds.x_mean.transpose() * ds.y);
  REQUIRE((res.beta - ols).cwiseAbs().maxCoeff() < 1e-10);
  check_result_invariants(res);
}

TEST_CASE("IPW matches the weighted-least-squares closed form") {
  Dataset ds = toy_dataset();
  CaseControlDesign design = CaseControlDesign::from_sample(ds.d, 0.17);
  VectorXd w = compute_weights(design, ds.d);
  EstimateResult res = fit_ipw(ds, Link::Identity, design);
  // oracle: (X'WX)^{-1} X'W y
  MatrixXd xtw = ds.x_mean.transpose() * w.asDiagonal();
  VectorXd wls = (xtw * ds.x_mean).ldlt().solve(xtw * ds.y);
  REQUIRE((res.beta - wls).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("IPW log link solves the weighted Poisson score") {
  Dataset ds = toy_dataset();
  ds.y << 3, 7, 2, 11, 5, 4;
  CaseControlDesign design = CaseControlDesign::from_sample(ds.d, 0.2);
  VectorXd w = compute_weights(design, ds.d);
  EstimateResult res = fit_ipw(ds, Link::Log, design);
  VectorXd m = (ds.x_mean * res.beta).array().exp().matrix();
  VectorXd score = ds.x_mean.transpose() * (w.array() * (ds.y - m).array()).matrix();
  REQUIRE(score.cwiseAbs().maxCoeff() < 1e-7);
  check_result_invariants(res);
}

TEST_CASE("nu_bar") {
  VectorXd x = VectorXd::Ones(1);
  SECTION("no selection bias") {
    REQUIRE(nu_bar(VectorXd::Zero(1), x, 0.37) == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("rare-disease limit") {
    REQUIRE(nu_bar(VectorXd::Constant(1, 1.7), x, 1e-14) ==
            Catch::Approx(0.0).margin(1e-10));
  }
  SECTION("brute-force two-point expectation") {
    // E over D in {0,1} with weights (1-p, p) of exp(nu(X,D))
    const double u = std::log(2.0), p = 0.5;
    const double brute = std::log(p * std::exp(u) + (1.0 - p) * std::exp(0.0));
    REQUIRE(nu_bar(VectorXd::Constant(1, u), x, p) ==
            Catch::Approx(brute).epsilon(1e-14));
    REQUIRE(brute == Catch::Approx(std::log(1.5)).epsilon(1e-14));
  }
}

TEST_CASE("control-function residuals") {
  Dataset ds = toy_dataset();
  VectorXd p_hat(6);
  p_hat << 0.2, 0.1, 0.15, 0.3, 0.12, 0.08;

  SECTION("identity link with zero delta equals the IPW residual") {
    VectorXd theta = VectorXd::Zero(4);
    theta.head(2) << 2.0, 1.0;
    VectorXd resid = cont_residual(theta, ds, Link::Identity, p_hat);
    VectorXd ipw_resid = ds.y - ds.x_mean * theta.head(2);
    REQUIRE((resid - ipw_resid).cwiseAbs().maxCoeff() < 1e-14);
  }
  SECTION("log link control rows use nu(X,0) = 0") {
    VectorXd theta(4);
    theta << 0.5, 0.2, 0.4, -0.1;
    VectorXd resid = cont_residual(theta, ds, Link::Log, p_hat);
    for (Index i = 0; i < ds.n(); ++i) {
      if (ds.d[i] != 0.0) continue;
      const double nb = nu_bar(theta.tail(2), ds.x_sel.row(i), p_hat[i]);
      const double expected =
          ds.y[i] - std::exp(ds.x_mean.row(i).dot(theta.head(2)) - nb);
      REQUIRE(resid[i] == Catch::Approx(expected).margin(1e-12));
    }
  }
}

TEST_CASE("weighted residual means vanish at the true parameters") {
  // Monte Carlo unbiasedness oracle on a large sampled population.
  ScenarioConfig cfg = make_identity_two_cov();
  std::mt19937_64 rng(99);
  Population pop = generate_population(cfg.gen, 300000, rng);
  Dataset cc = sample_case_control(pop.data, 20000, 20000, 100);
  CaseControlDesign design{pop.prevalence, 20000, 20000};
  VectorXd w = compute_weights(design, cc.d);
  VectorXd theta(8);
  theta << pop.beta_true, pop.delta_true;
  // true p(X) on the sampled rows, recomputed from the generator's model
  VectorXd p_true(cc.n());
  for (Index i = 0; i < cc.n(); ++i)
    p_true[i] = expit(-3.2 + 0.3 * cc.x_dis(i, 1) + cc.x_dis(i, 2));
  VectorXd resid = cont_residual(theta, cc, Link::Identity, p_true);
  for (Index j = 0; j < cc.q(); ++j) {
    VectorXd contrib =
        (w.array() * resid.array() * cc.x_mean.col(j).array()).matrix();
    const double mean = contrib.mean();
    const double se = std::sqrt((contrib.array() - mean).square().sum() /
                                (contrib.size() - 1.0)) /
                      std::sqrt(static_cast<double>(contrib.size()));
    REQUIRE(std::abs(mean) < 4.0 * se);
  }
}

TEST_CASE("h1_opt structure") {
  SECTION("identity link with equal weights is a scaled score design") {
    Dataset ds = toy_dataset();
    CaseControlDesign design = CaseControlDesign::from_sample(ds.d, 2.0 / 6.0);
    VectorXd p_hat = VectorXd::Constant(6, 0.25);
    VectorXd theta0(4);
    theta0 << 1.0, 0.5, 0.2, 0.1;
    MatrixXd h1 = h1_opt(theta0, ds, Link::Identity, p_hat, design);
    // with w1 = w0 = 1 and constant p-hat the bracket is one scalar
    MatrixXd stack(6, 4);
    stack.leftCols(2) = ds.x_mean;
    for (Index i = 0; i < 6; ++i)
      stack.row(i).tail(2) = ds.x_sel.row(i) * (ds.d[i] - p_hat[i]);
    const double ratio = h1(0, 0) / stack(0, 0);
    REQUIRE((h1 - ratio * stack).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("log link degenerate-mixture row") {
    Dataset ds = toy_dataset();
    ds.y << 3, 7, 2, 11, 5, 4;
    CaseControlDesign design = CaseControlDesign::from_sample(ds.d, 0.2);
    VectorXd p_hat = VectorXd::Constant(6, 1e-13);
    VectorXd theta0(4);
    theta0 << 0.4, 0.1, 0.3, -0.2;
    MatrixXd h1 = h1_opt(theta0, ds, Link::Log, p_hat, design);
    const double w0 = design.control_weight();
    for (Index i = 0; i < 6; ++i) {
      if (ds.d[i] != 0.0) continue;
      // p -> 0: bracket -> var(X,0) w0, derivative -> m [x_mean | 0]
      const double m = std::exp(ds.x_mean.row(i).dot(theta0.head(2)));
      REQUIRE(h1(i, 0) == Catch::Approx(m * ds.x_mean(i, 0) / (m * w0))
                              .epsilon(1e-6));
      REQUIRE(std::abs(h1(i, 2)) < 1e-8);
      REQUIRE(std::abs(h1(i, 3)) < 1e-8);
    }
  }
  SECTION("non-positive variance is rejected") {
    Dataset ds = toy_dataset();
    CaseControlDesign design = CaseControlDesign::from_sample(ds.d, 0.2);
    VectorXd p_hat = VectorXd::Constant(6, 0.2);
    // exact fit: residuals identically zero => zero variance estimate
    Dataset degen = ds;
    degen.y = ds.x_mean * VectorXd::Ones(2);
    VectorXd theta0(4);
    theta0 << 1.0, 1.0, 0.0, 0.0;
    REQUIRE_THROWS_AS(h1_opt(theta0, degen, Link::Identity, p_hat, design),
                      degenerate_design);
  }
}

TEST_CASE("derivative stacks match finite differences") {
  for (Link link : {Link::Identity, Link::Log}) {
    double prevalence = 0.0;
    Dataset cc = testutil::make_cc_dataset(link == Link::Identity ? 41 : 43,
                                           20000, 250, 250, link, &prevalence);
    CaseControlDesign design = CaseControlDesign::from_sample(cc.d, prevalence);
    DiseaseModelFit dfit = fit_cc_logistic(cc.x_dis, cc.d);
    VectorXd p_hat = population_disease_prob(dfit, cc.x_dis, design);
    VectorXd w = compute_weights(design, cc.d);
    std::mt19937_64 rng(link == Link::Identity ? 7 : 8);
    std::normal_distribution<double> normal(0.0, 0.05);

    for (int rep = 0; rep < 3; ++rep) {
      VectorXd theta(cc.q() + cc.r());
      if (link == Link::Identity) {
        theta << 50, 4, 3, 3, 3, 2, 2, 2;
      } else {
        theta << 3, 0.7, 0.5, 0.5, 0.5, 0.3, 0.3, 0.3;
      }
      for (Index j = 0; j < theta.size(); ++j) theta[j] += normal(rng);

      // (a) conditional-mean derivative stack
      auto mu_tilde = [&](const VectorXd& th) -> VectorXd {
        return cc.y - cont_residual(th, cc, link, p_hat);
      };
      MatrixXd fd = testutil::fd_jacobian(mu_tilde, theta);
      MatrixXd stack = mu_tilde_derivative(theta, cc, link, p_hat);
      REQUIRE(testutil::rel_err(stack, fd) < 1e-6);

      // (b) dU/dtheta of the joint system
      MatrixXd h1 = h1_opt(theta, cc, link, p_hat, design);
      auto mean_u = [&](const VectorXd& th) -> VectorXd {
        VectorXd resid = cont_residual(th, cc, link, p_hat);
        return h1.transpose() * (w.array() * resid.array()).matrix() /
               static_cast<double>(cc.n());
      };
      JointSystem sys = make_joint_system(theta, cc, link, design, p_hat, h1);
      MatrixXd fd_theta = testutil::fd_jacobian(mean_u, theta);
      REQUIRE(testutil::rel_err(sys.dU_dtheta, fd_theta) < 1e-6);

      // (c) dU/dalpha, differentiating through p(X; alpha) only
      const double kappa = dfit.offset(design);
      auto mean_u_alpha = [&](const VectorXd& a) -> VectorXd {
        VectorXd p = (cc.x_dis * a).unaryExpr(
            [kappa](double e) { return expit(e + kappa); });
        VectorXd resid = cont_residual(theta, cc, link, p);
        return h1.transpose() * (w.array() * resid.array()).matrix() /
               static_cast<double>(cc.n());
      };
      MatrixXd fd_alpha = testutil::fd_jacobian(mean_u_alpha, dfit.alpha);
      REQUIRE(testutil::rel_err(sys.dU_dalpha, fd_alpha) < 1e-6);
    }
  }
}

TEST_CASE("corollary 1: saturated designs make cont equal to IPW") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int rep = 0; rep < 3; ++rep) {
    const Index n = 600;
    MatrixXd x(n, 2);
    VectorXd y(n), d(n);
    for (Index i = 0; i < n; ++i) {
      const double cell = unif(rng) < 0.4 ? 1.0 : 0.0;
      x(i, 0) = 1.0;
      x(i, 1) = cell;
      const double pcc = cell == 1.0 ? 0.6 : 0.4;
      d[i] = unif(rng) < pcc ? 1.0 : 0.0;
      y[i] = 2.0 + cell + d[i] * (1.0 + cell) + normal(rng);
    }
    Dataset ds{y, d, x, x, x};
    CaseControlDesign design = CaseControlDesign::from_sample(ds.d, 0.15);
    EstimateResult cont = fit_cont(ds, Link::Identity, design);
    EstimateResult ipw = fit_ipw(ds, Link::Identity, design);
    REQUIRE((cont.beta - ipw.beta).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("sandwich covariance paths") {
  double prevalence = 0.0;
  Dataset cc =
      testutil::make_cc_dataset(51, 30000, 400, 400, Link::Identity, &prevalence);
  CaseControlDesign design = CaseControlDesign::from_sample(cc.d, prevalence);
  DiseaseModelFit dfit = fit_cc_logistic(cc.x_dis, cc.d);
  VectorXd p_hat = population_disease_prob(dfit, cc.x_dis, design);
  EstimateResult res = fit_cont(cc, Link::Identity, design);
  VectorXd theta(res.beta.size() + res.delta.size());
  theta << res.beta, res.delta;
  MatrixXd h1 = h1_opt(theta, cc, Link::Identity, p_hat, design);
  JointSystem sys = make_joint_system(theta, cc, Link::Identity, design, p_hat, h1);

  SECTION("known-p path drops the correction") {
    MatrixXd plain = sandwich_covariance(sys);
    const Index n = cc.n();
    MatrixXd b = sys.residual_contribs.transpose() * sys.residual_contribs /
                 static_cast<double>(n);
    MatrixXd ainv = sys.dU_dtheta.inverse();
    MatrixXd manual = ainv * b * ainv.transpose() / static_cast<double>(n);
    REQUIRE(testutil::rel_err(plain, manual) < 1e-12);
  }
  SECTION("corrected path matches the influence-function formula") {
    MatrixXd corrected = sandwich_covariance(sys, dfit);
    const Index n = cc.n();
    MatrixXd phi = sys.residual_contribs +
                   dfit.score_contribs *
                       dfit.neg_jacobian.inverse() * sys.dU_dalpha.transpose();
    MatrixXd b = phi.transpose() * phi / static_cast<double>(n);
    MatrixXd ainv = sys.dU_dtheta.inverse();
    MatrixXd manual = ainv * b * ainv.transpose() / static_cast<double>(n);
    REQUIRE(testutil::rel_err(corrected, manual) < 1e-10);
    // correction changes the answer (alpha is genuinely estimated)
    REQUIRE(testutil::rel_err(corrected, sandwich_covariance(sys)) > 1e-6);
  }
}

TEST_CASE("naive estimators") {
  SECTION("four-point OLS hand check") {
    Dataset ds;
    ds.y.resize(4);
    ds.y << 1.0, 2.0, 2.0, 4.0;
    ds.d.resize(4);
    ds.d << 0, 1, 0, 1;
    ds.x_mean.resize(4, 2);
    ds.x_mean << 1, 0, 1, 1, 1, 2, 1, 3;
    ds.x_sel = ds.x_mean;
    ds.x_dis = ds.x_mean;
    EstimateResult res = fit_naive_pooled(ds, Link::Identity);
    // normal equations by hand: X'X = [[4,6],[6,14]], X'y = [9, 18.4]... using
    // exact arithmetic via the closed form instead
    VectorXd ols = (ds.x_mean.transpose() * ds.x_mean)
                       .ldlt()
                       .solve(ds.x_mean.transpose() * ds.y);
    REQUIRE((res.beta - ols).cwiseAbs().maxCoeff() < 1e-12);
    check_result_invariants(res);
  }
  SECTION("Dind equals the augmented-design OLS, covariate block reported") {
    Dataset cc = testutil::make_cc_dataset(61, 20000, 200, 200);
    EstimateResult res = fit_naive_dind(cc, Link::Identity);
    MatrixXd x(cc.n(), cc.q() + 1);
    x.leftCols(cc.q()) = cc.x_mean;
    x.col(cc.q()) = cc.d;
    VectorXd full = (x.transpose() * x).ldlt().solve(x.transpose() * cc.y);
    REQUIRE((res.beta - full.head(cc.q())).cwiseAbs().maxCoeff() < 1e-9);
    REQUIRE(res.beta.size() == cc.q());
    REQUIRE(res.covariance.rows() == cc.q());
    check_result_invariants(res);
  }
}

TEST_CASE("cont fit reports the expected shapes and invariants") {
  for (Link link : {Link::Identity, Link::Log}) {
    double prevalence = 0.0;
    Dataset cc = testutil::make_cc_dataset(link == Link::Identity ? 71 : 73,
                                           30000, 400, 400, link, &prevalence);
    CaseControlDesign design = CaseControlDesign::from_sample(cc.d, prevalence);
    EstimateResult res = fit_cont(cc, link, design);
    REQUIRE(res.converged);
    REQUIRE(res.beta.size() == cc.q());
    REQUIRE(res.delta.size() == cc.r());
    REQUIRE(res.alpha.size() == cc.s());
    REQUIRE(res.covariance.rows() == cc.q() + cc.r());
    REQUIRE(res.tag == (link == Link::Identity ? EstimatorTag::ContIdentity
                                               : EstimatorTag::ContLog));
    check_result_invariants(res);
  }
}

TEST_CASE("per-iteration h1 re-estimation converges near the frozen root") {
  double prevalence = 0.0;
  Dataset cc =
      testutil::make_cc_dataset(81, 30000, 500, 500, Link::Log, &prevalence);
  CaseControlDesign design = CaseControlDesign::from_sample(cc.d, prevalence);
  EstimateResult frozen = fit_cont(cc, Link::Log, design);
  FitOptions opts;
  opts.update_h1 = true;
  EstimateResult updated = fit_cont(cc, Link::Log, design, opts);
  REQUIRE(updated.converged);
  // different weighting, same estimand: roots agree to sampling-noise order
  REQUIRE((updated.beta - frozen.beta).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("rank deficiency is reported") {
  Dataset ds = toy_dataset();
  ds.x_mean.col(1) = ds.x_mean.col(0);  // duplicate column
  CaseControlDesign design = CaseControlDesign::from_sample(ds.d, 0.2);
  REQUIRE_THROWS_AS(fit_ipw(ds, Link::Identity, design), rank_error);
  REQUIRE_THROWS_AS(fit_naive_pooled(ds, Link::Identity), rank_error);
  REQUIRE_THROWS_AS(fit_cont(ds, Link::Identity, design), rank_error);
}
