#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ccsec/core.hpp"
#include "ccsec/estimators.hpp"

namespace ccsec {

inline constexpr double kWaldZ = 1.959964;

// ---------------------------------------------------------------------------
// Seed derivation: independent per-replicate streams from (master, index).
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                 std::uint64_t salt = 0) {
  return splitmix64(master ^ splitmix64(index + 1) ^ (salt * 0xD6E8FEB86659FD93ULL));
}

// ---------------------------------------------------------------------------
// Data-generating process description. Design columns are products of
// covariates; an empty variable list denotes the intercept column.
// ---------------------------------------------------------------------------

struct CovariateSpec {
  enum class Dist { Normal, Bernoulli, Binomial };
  std::string name;
  Dist dist = Dist::Normal;
  double mean = 0.0, sd = 1.0;  // Normal
  double prob = 0.5;            // Bernoulli / Binomial
  int trials = 2;               // Binomial

  static CovariateSpec normal(std::string name, double mean, double sd) {
    CovariateSpec c;
    c.name = std::move(name);
    c.dist = Dist::Normal;
    c.mean = mean;
    c.sd = sd;
    return c;
  }
  static CovariateSpec bernoulli(std::string name, double p) {
    CovariateSpec c;
    c.name = std::move(name);
    c.dist = Dist::Bernoulli;
    c.prob = p;
    return c;
  }
  static CovariateSpec binomial(std::string name, int trials, double p) {
    CovariateSpec c;
    c.name = std::move(name);
    c.dist = Dist::Binomial;
    c.trials = trials;
    c.prob = p;
    return c;
  }
};

struct TermSpec {
  double coef = 0.0;
  std::vector<int> vars;  // covariate indices; empty = intercept
};

struct GeneratorSpec {
  Link link = Link::Identity;
  std::vector<CovariateSpec> covariates;
  double dis_intercept = 0.0;
  std::vector<TermSpec> dis_terms;   // disease logit beyond the intercept
  std::vector<TermSpec> mean_terms;  // mean design; coefs are the true beta
  std::vector<TermSpec> sel_terms;   // selection-bias design; coefs = true delta
  double resid_sd = 1.0;             // identity-link residual sd

  VectorXd beta_true() const {
    VectorXd b(static_cast<Index>(mean_terms.size()));
    for (std::size_t j = 0; j < mean_terms.size(); ++j) b[j] = mean_terms[j].coef;
    return b;
  }
  VectorXd delta_true() const {
    VectorXd d(static_cast<Index>(sel_terms.size()));
    for (std::size_t j = 0; j < sel_terms.size(); ++j) d[j] = sel_terms[j].coef;
    return d;
  }
  std::string term_name(const TermSpec& t) const {
    if (t.vars.empty()) return "intercept";
    std::string s;
    for (std::size_t k = 0; k < t.vars.size(); ++k) {
      if (k) s += ":";
      s += covariates[static_cast<std::size_t>(t.vars[k])].name;
    }
    return s;
  }
  std::vector<std::string> coef_names() const {
    std::vector<std::string> out;
    out.reserve(mean_terms.size());
    for (const auto& t : mean_terms) out.push_back(term_name(t));
    return out;
  }
};

struct Population {
  Dataset data;
  VectorXd p_true;
  VectorXd beta_true, delta_true;
  double prevalence = 0.0;  // realized case fraction of the pool
};

namespace detail {

inline MatrixXd term_columns(const std::vector<TermSpec>& terms,
                             const MatrixXd& cov) {
  MatrixXd x = MatrixXd::Ones(cov.rows(), static_cast<Index>(terms.size()));
  for (std::size_t j = 0; j < terms.size(); ++j)
    for (int v : terms[j].vars)
      x.col(static_cast<Index>(j)).array() *= cov.col(v).array();
  return x;
}

}  // namespace detail

inline Population generate_population(const GeneratorSpec& spec, Index n,
                                      std::mt19937_64& rng) {
  const Index k = static_cast<Index>(spec.covariates.size());
  MatrixXd cov(n, k);
  for (Index j = 0; j < k; ++j) {
    const auto& c = spec.covariates[static_cast<std::size_t>(j)];
    switch (c.dist) {
      case CovariateSpec::Dist::Normal: {
        std::normal_distribution<double> dist(c.mean, c.sd);
        for (Index i = 0; i < n; ++i) cov(i, j) = dist(rng);
        break;
      }
      case CovariateSpec::Dist::Bernoulli: {
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        for (Index i = 0; i < n; ++i) cov(i, j) = dist(rng) < c.prob ? 1.0 : 0.0;
        break;
      }
      case CovariateSpec::Dist::Binomial: {
        std::binomial_distribution<int> dist(c.trials, c.prob);
        for (Index i = 0; i < n; ++i) cov(i, j) = static_cast<double>(dist(rng));
        break;
      }
    }
  }

  Population pop;
  pop.beta_true = spec.beta_true();
  pop.delta_true = spec.delta_true();

  VectorXd eta_dis = VectorXd::Constant(n, spec.dis_intercept);
  const MatrixXd dis_cols = detail::term_columns(spec.dis_terms, cov);
  for (std::size_t j = 0; j < spec.dis_terms.size(); ++j)
    eta_dis += spec.dis_terms[j].coef * dis_cols.col(static_cast<Index>(j));
  pop.p_true = eta_dis.unaryExpr([](double e) { return expit(e); });

  VectorXd d(n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index i = 0; i < n; ++i) d[i] = unif(rng) < pop.p_true[i] ? 1.0 : 0.0;
  pop.prevalence = d.mean();

  Dataset& ds = pop.data;
  ds.d = d;
  ds.x_mean = detail::term_columns(spec.mean_terms, cov);
  ds.x_sel = detail::term_columns(spec.sel_terms, cov);
  ds.x_dis = MatrixXd::Ones(n, static_cast<Index>(spec.dis_terms.size()) + 1);
  ds.x_dis.rightCols(static_cast<Index>(spec.dis_terms.size())) = dis_cols;

  const VectorXd mu = ds.x_mean * pop.beta_true;
  const VectorXd u = ds.x_sel * pop.delta_true;
  ds.y.resize(n);
  if (spec.link == Link::Identity) {
    std::normal_distribution<double> eps(0.0, spec.resid_sd);
    for (Index i = 0; i < n; ++i)
      ds.y[i] = mu[i] + (d[i] - pop.p_true[i]) * u[i] + eps(rng);
  } else {
    for (Index i = 0; i < n; ++i) {
      const double nb = ccsec::detail::log_mix_exp(u[i], pop.p_true[i]);
      const double m = std::exp(mu[i] + d[i] * u[i] - nb);
      if (!std::isfinite(m))
        throw convergence_error("generator", "conditional mean overflow");
      std::poisson_distribution<long> pois(m);
      ds.y[i] = static_cast<double>(pois(rng));
    }
  }
  return pop;
}

// ---------------------------------------------------------------------------
// Case-control sampling: uniform without replacement within each class.
// ---------------------------------------------------------------------------

inline std::vector<Index> sample_case_control_indices(const VectorXd& d,
                                                      Index n_cases,
                                                      Index n_controls,
                                                      std::uint64_t seed) {
  std::vector<Index> cases, controls;
  for (Index i = 0; i < d.size(); ++i)
    (d[i] == 1.0 ? cases : controls).push_back(i);
  if (static_cast<Index>(cases.size()) < n_cases ||
      static_cast<Index>(controls.size()) < n_controls)
    throw degenerate_design("sampling", "population has insufficient class counts");

  std::mt19937_64 rng(seed);
  auto draw = [&rng](std::vector<Index>& idx, Index m) {
    for (Index i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(
          static_cast<std::size_t>(i), idx.size() - 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[pick(rng)]);
    }
    idx.resize(static_cast<std::size_t>(m));
  };
  draw(cases, n_cases);
  draw(controls, n_controls);
  cases.insert(cases.end(), controls.begin(), controls.end());
  return cases;
}

inline Dataset subset_rows(const Dataset& ds, const std::vector<Index>& rows) {
  Dataset out;
  const Index m = static_cast<Index>(rows.size());
  out.y.resize(m);
  out.d.resize(m);
  out.x_mean.resize(m, ds.x_mean.cols());
  out.x_sel.resize(m, ds.x_sel.cols());
  out.x_dis.resize(m, ds.x_dis.cols());
  for (Index i = 0; i < m; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    out.y[i] = ds.y[r];
    out.d[i] = ds.d[r];
    out.x_mean.row(i) = ds.x_mean.row(r);
    out.x_sel.row(i) = ds.x_sel.row(r);
    out.x_dis.row(i) = ds.x_dis.row(r);
  }
  return out;
}

inline Dataset sample_case_control(const Dataset& population, Index n_cases,
                                   Index n_controls, std::uint64_t seed) {
  return subset_rows(population,
                     sample_case_control_indices(population.d, n_cases,
                                                 n_controls, seed));
}

// ---------------------------------------------------------------------------
// Scenario configuration and replicate runner.
// ---------------------------------------------------------------------------

enum class ScenarioKind {
  IdentitySingle,
  IdentityTwoCov,
  SnpSettings2,
  LogPoisson,
  Custom
};

struct EstimatorSpec {
  enum class Kind { Ipw, Cont, Pooled, Dind };
  std::string name;
  Kind kind = Kind::Ipw;
  std::vector<int> sel_cols;  // Cont only; empty = full selection design
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Custom;
  GeneratorSpec gen;
  Index n_cases = 500;
  Index n_controls = 500;
  int n_replicates = 1000;
  std::uint64_t seed = 1;
  Index pool_size = 50000;
  int workers = 0;  // 0 = hardware concurrency
  std::vector<EstimatorSpec> estimators;

  void validate() const {
    if (n_cases < 1 || n_controls < 1 || n_replicates < 1 || pool_size < 2)
      throw degenerate_design("scenario", "counts must be positive");
    const int r = static_cast<int>(gen.sel_terms.size());
    for (const auto& est : estimators) {
      if (est.kind != EstimatorSpec::Kind::Cont) continue;
      if (est.sel_cols.empty()) continue;
      for (int c : est.sel_cols)
        if (c < 0 || c >= r)
          throw degenerate_design(
              "scenario", "variant '" + est.name +
                              "' selects a column outside the correct design");
    }
  }
};

struct SimulationSummary {
  struct Row {
    std::string estimator;
    std::string coefficient;
    double truth = 0.0;
    double bias = 0.0;
    double mse = 0.0;
    std::optional<double> emp_sd;
    double est_sd = 0.0;
    double coverage = 0.0;
    int n_failed = 0;
  };
  std::vector<Row> rows;
  int n_replicates = 0;

  const Row* find(const std::string& estimator, Index coef) const {
    Index seen = 0;
    for (const auto& row : rows) {
      if (row.estimator != estimator) continue;
      if (seen == coef) return &row;
      ++seen;
    }
    return nullptr;
  }
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline MatrixXd select_columns(const MatrixXd& x, const std::vector<int>& cols) {
  MatrixXd out(x.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    out.col(static_cast<Index>(j)) = x.col(cols[j]);
  return out;
}

struct ReplicateStore {
  MatrixXd est, se;            // n_replicates x q
  std::vector<char> ok;

  void init(int reps, Index q) {
    est = MatrixXd::Zero(reps, q);
    se = MatrixXd::Zero(reps, q);
    ok.assign(static_cast<std::size_t>(reps), 0);
  }
};

}  // namespace detail

inline EstimateResult run_estimator(const EstimatorSpec& spec,
                                    const Dataset& cc, Link link,
                                    const CaseControlDesign& design) {
  switch (spec.kind) {
    case EstimatorSpec::Kind::Ipw:
      return fit_ipw(cc, link, design);
    case EstimatorSpec::Kind::Pooled:
      return fit_naive_pooled(cc, link);
    case EstimatorSpec::Kind::Dind:
      return fit_naive_dind(cc, link);
    case EstimatorSpec::Kind::Cont: {
      if (spec.sel_cols.empty()) return fit_cont(cc, link, design);
      Dataset variant = cc;
      variant.x_sel = detail::select_columns(cc.x_sel, spec.sel_cols);
      return fit_cont(variant, link, design);
    }
  }
  throw error("scenario", "unknown estimator kind");
}

inline SimulationSummary run_replicates(const ScenarioConfig& config) {
  config.validate();
  const Index q = static_cast<Index>(config.gen.mean_terms.size());
  const int reps = config.n_replicates;
  const std::size_t n_est = config.estimators.size();

  std::vector<detail::ReplicateStore> store(n_est);
  for (auto& s : store) s.init(reps, q);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int k = next.fetch_add(1);
      if (k >= reps) break;
      std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(k)));
      try {
        Population pop = generate_population(config.gen, config.pool_size, rng);
        const auto rows = sample_case_control_indices(
            pop.data.d, config.n_cases, config.n_controls,
            derive_seed(config.seed, static_cast<std::uint64_t>(k), 1));
        const Dataset cc = subset_rows(pop.data, rows);
        const CaseControlDesign design{pop.prevalence, config.n_cases,
                                       config.n_controls};
        for (std::size_t e = 0; e < n_est; ++e) {
          try {
            EstimateResult res =
                run_estimator(config.estimators[e], cc, config.gen.link, design);
            store[e].est.row(k) = res.beta.head(q).transpose();
            store[e].se.row(k) = res.std_errors.head(q).transpose();
            store[e].ok[static_cast<std::size_t>(k)] = 1;
          } catch (const std::exception&) {
            // per-replicate failure: counted, not fatal
          }
        }
      } catch (const std::exception&) {
        // generation/sampling failure: every estimator loses this replicate
      }
    }
  };

  int n_workers = config.workers > 0
                      ? config.workers
                      : static_cast<int>(std::thread::hardware_concurrency());
  if (n_workers < 1) n_workers = 1;
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // deterministic reduction in replicate order
  SimulationSummary summary;
  summary.n_replicates = reps;
  const VectorXd truth = config.gen.beta_true();
  const auto names = config.gen.coef_names();
  for (std::size_t e = 0; e < n_est; ++e) {
    const auto& s = store[e];
    int m = 0;
    for (char f : s.ok) m += f;
    const int failed = reps - m;
    for (Index j = 0; j < q; ++j) {
      SimulationSummary::Row row;
      row.estimator = config.estimators[e].name;
      row.coefficient = names[static_cast<std::size_t>(j)];
      row.truth = truth[j];
      row.n_failed = failed;
      double mean = 0.0, mse = 0.0, se_mean = 0.0;
      int covered = 0;
      for (int k = 0; k < reps; ++k) {
        if (!s.ok[static_cast<std::size_t>(k)]) continue;
        const double b = s.est(k, j);
        mean += b;
        mse += (b - truth[j]) * (b - truth[j]);
        se_mean += s.se(k, j);
        if (std::abs(b - truth[j]) <= kWaldZ * s.se(k, j)) ++covered;
      }
      if (m > 0) {
        mean /= m;
        mse /= m;
        se_mean /= m;
        row.bias = mean - truth[j];
        row.mse = mse;
        row.est_sd = se_mean;
        row.coverage = static_cast<double>(covered) / m;
        if (m > 1) {
          double ss = 0.0;
          for (int k = 0; k < reps; ++k) {
            if (!s.ok[static_cast<std::size_t>(k)]) continue;
            const double dev = s.est(k, j) - mean;
            ss += dev * dev;
          }
          row.emp_sd = std::sqrt(ss / (m - 1));
        }
      }
      summary.rows.push_back(std::move(row));
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Serialization: CSV (fixed schema) and a table mirroring the paper's layout.
// ---------------------------------------------------------------------------

inline void write_summary_csv(const SimulationSummary& summary, std::ostream& os) {
  os << "estimator,coefficient,truth,bias,mse,emp_sd,est_sd,coverage,n_failed\n";
  for (const auto& r : summary.rows) {
    os << r.estimator << ',' << r.coefficient << ',' << detail::fmt17(r.truth)
       << ',' << detail::fmt17(r.bias) << ',' << detail::fmt17(r.mse) << ',';
    if (r.emp_sd) os << detail::fmt17(*r.emp_sd);
    os << ',' << detail::fmt17(r.est_sd) << ',' << detail::fmt17(r.coverage)
       << ',' << r.n_failed << '\n';
  }
}

// Rows are stored estimator-major; the report regroups them per coefficient,
// mirroring the per-coefficient blocks of the published tables.
inline void write_summary_report(const SimulationSummary& summary,
                                 std::ostream& os) {
  std::vector<std::string> coefs;
  for (const auto& r : summary.rows)
    if (std::find(coefs.begin(), coefs.end(), r.coefficient) == coefs.end())
      coefs.push_back(r.coefficient);

  char buf[160];
  for (std::size_t c = 0; c < coefs.size(); ++c) {
    bool header_done = false;
    for (const auto& r : summary.rows) {
      if (r.coefficient != coefs[c]) continue;
      if (!header_done) {
        std::snprintf(buf, sizeof(buf), "%s%s (truth %g)\n", c ? "\n" : "",
                      coefs[c].c_str(), r.truth);
        os << buf;
        std::snprintf(buf, sizeof(buf), "  %-12s %8s %8s %8s %8s %9s %7s\n",
                      "estimator", "bias", "mse", "emp sd", "est sd",
                      "coverage", "failed");
        os << buf;
        header_done = true;
      }
      std::snprintf(buf, sizeof(buf), "  %-12s %8.3f %8.3f ",
                    r.estimator.c_str(), r.bias, r.mse);
      os << buf;
      if (r.emp_sd)
        std::snprintf(buf, sizeof(buf), "%8.3f ", *r.emp_sd);
      else
        std::snprintf(buf, sizeof(buf), "%8s ", "");
      os << buf;
      std::snprintf(buf, sizeof(buf), "%8.3f %9.3f %7d\n", r.est_sd, r.coverage,
                    r.n_failed);
      os << buf;
    }
  }
}

// ---------------------------------------------------------------------------
// Built-in scenarios.
// ---------------------------------------------------------------------------

inline ScenarioConfig make_identity_single() {
  ScenarioConfig c;
  c.kind = ScenarioKind::IdentitySingle;
  c.gen.link = Link::Identity;
  c.gen.covariates = {CovariateSpec::normal("X1", 2.0, 4.0)};
  c.gen.dis_intercept = -3.2;
  c.gen.dis_terms = {{0.3, {0}}};
  c.gen.mean_terms = {{50.0, {}}, {4.0, {0}}};
  c.gen.sel_terms = {{3.0, {}}, {2.0, {0}}};
  c.gen.resid_sd = 2.0;
  c.n_cases = c.n_controls = 500;
  c.estimators = {
      {"cont-cor", EstimatorSpec::Kind::Cont, {0, 1}},
      {"cont-mis", EstimatorSpec::Kind::Cont, {0}},
      {"IPW", EstimatorSpec::Kind::Ipw, {}},
      {"pooled", EstimatorSpec::Kind::Pooled, {}},
      {"Dind", EstimatorSpec::Kind::Dind, {}},
  };
  return c;
}

inline ScenarioConfig make_identity_two_cov() {
  ScenarioConfig c;
  c.kind = ScenarioKind::IdentityTwoCov;
  c.gen.link = Link::Identity;
  c.gen.covariates = {CovariateSpec::normal("X1", 2.0, 4.0),
                      CovariateSpec::bernoulli("X2", 0.1)};
  c.gen.dis_intercept = -3.2;
  c.gen.dis_terms = {{0.3, {0}}, {1.0, {1}}};
  c.gen.mean_terms = {{50.0, {}}, {4.0, {0}}, {3.0, {1}}, {3.0, {0, 1}}};
  c.gen.sel_terms = {{3.0, {}}, {2.0, {0}}, {2.0, {1}}, {2.0, {0, 1}}};
  c.gen.resid_sd = 2.0;
  c.n_cases = c.n_controls = 500;
  c.estimators = {
      {"cont-cor", EstimatorSpec::Kind::Cont, {0, 1, 2, 3}},
      {"cont-mis1", EstimatorSpec::Kind::Cont, {0, 1, 2}},
      {"cont-mis2", EstimatorSpec::Kind::Cont, {0, 1}},
      {"cont-mis3", EstimatorSpec::Kind::Cont, {0, 2}},
      {"cont-mis4", EstimatorSpec::Kind::Cont, {0}},
      {"IPW", EstimatorSpec::Kind::Ipw, {}},
      {"pooled", EstimatorSpec::Kind::Pooled, {}},
      {"Dind", EstimatorSpec::Kind::Dind, {}},
  };
  return c;
}

inline ScenarioConfig make_snp_settings2() {
  ScenarioConfig c;
  c.kind = ScenarioKind::SnpSettings2;
  c.gen.link = Link::Identity;
  c.gen.covariates = {CovariateSpec::normal("Z1", 0.0, 2.0),
                      CovariateSpec::bernoulli("Z2", 0.2),
                      CovariateSpec::binomial("G", 2, 0.3)};
  c.gen.dis_intercept = -3.8;
  c.gen.dis_terms = {{0.3, {0}}, {1.0, {2}}};
  c.gen.mean_terms = {{3.0, {}}, {0.7, {0}}, {0.5, {1}}, {0.3, {2}}};
  c.gen.sel_terms = {{1.0, {}}, {0.5, {0}}, {0.3, {1}}};
  c.gen.resid_sd = 2.0;
  c.n_cases = c.n_controls = 500;
  c.estimators = {
      {"cont", EstimatorSpec::Kind::Cont, {0, 1, 2}},
      {"IPW", EstimatorSpec::Kind::Ipw, {}},
  };
  return c;
}

inline ScenarioConfig make_log_poisson() {
  ScenarioConfig c;
  c.kind = ScenarioKind::LogPoisson;
  c.gen.link = Link::Log;
  c.gen.covariates = {CovariateSpec::normal("X1", 1.0, 0.2),
                      CovariateSpec::normal("X2", 1.5, 0.2)};
  c.gen.dis_intercept = -3.8;
  c.gen.dis_terms = {{0.3, {0}}, {1.0, {1}}};
  c.gen.mean_terms = {{3.0, {}}, {0.7, {0}}, {0.5, {1}}, {0.5, {0, 1}}};
  c.gen.sel_terms = {{0.5, {}}, {0.3, {0}}, {0.3, {1}}, {0.3, {0, 1}}};
  c.n_cases = c.n_controls = 1000;
  c.estimators = {
      {"cont-cor", EstimatorSpec::Kind::Cont, {0, 1, 2, 3}},
      {"cont-mis1", EstimatorSpec::Kind::Cont, {0, 1, 2}},
      {"cont-mis2", EstimatorSpec::Kind::Cont, {0, 1}},
      {"cont-mis3", EstimatorSpec::Kind::Cont, {0, 2}},
      {"cont-mis4", EstimatorSpec::Kind::Cont, {0}},
      {"IPW", EstimatorSpec::Kind::Ipw, {}},
      {"pooled", EstimatorSpec::Kind::Pooled, {}},
      {"Dind", EstimatorSpec::Kind::Dind, {}},
  };
  return c;
}

inline ScenarioConfig make_scenario(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::IdentitySingle: return make_identity_single();
    case ScenarioKind::IdentityTwoCov: return make_identity_two_cov();
    case ScenarioKind::SnpSettings2: return make_snp_settings2();
    case ScenarioKind::LogPoisson: return make_log_poisson();
    case ScenarioKind::Custom: break;
  }
  throw error("scenario", "custom scenarios need an explicit config");
}

// ---------------------------------------------------------------------------
// Reference bounds for `simulate --check`. One entry per published value the
// scenario is expected to reproduce at 1000 replicates.
// ---------------------------------------------------------------------------

struct SummaryCheck {
  std::string label;
  // stat: bias | bias_abs | emp_sd | est_sd | mse | coverage
  std::string estimator;
  Index coef = 0;
  std::string stat;
  double lo = 0.0, hi = 0.0;
  // relational form: stat of `estimator` must be <= stat of `other`
  std::string other;
};

struct CheckResult {
  std::string label;
  bool pass = false;
  double observed = 0.0;
  double lo = 0.0, hi = 0.0;
};

namespace detail {

inline double summary_stat(const SimulationSummary& s, const std::string& est,
                           Index coef, const std::string& stat) {
  const auto* row = s.find(est, coef);
  if (!row) throw error("check", "no summary row for estimator " + est);
  if (stat == "bias") return row->bias;
  if (stat == "bias_abs") return std::abs(row->bias);
  if (stat == "emp_sd") return row->emp_sd.value_or(0.0);
  if (stat == "est_sd") return row->est_sd;
  if (stat == "mse") return row->mse;
  if (stat == "coverage") return row->coverage;
  throw error("check", "unknown statistic " + stat);
}

}  // namespace detail

inline std::vector<SummaryCheck> scenario_checks(ScenarioKind kind) {
  using V = std::vector<SummaryCheck>;
  switch (kind) {
    case ScenarioKind::IdentitySingle:
      return V{
          {"IPW b1 |bias| <= 0.005", "IPW", 1, "bias_abs", 0.0, 0.005, ""},
          {"IPW b1 emp sd in 0.044+-0.005", "IPW", 1, "emp_sd", 0.039, 0.049, ""},
          {"IPW b1 coverage in 0.961+-0.02", "IPW", 1, "coverage", 0.941, 0.981, ""},
          {"cont-cor b1 emp sd in 0.038+-0.005", "cont-cor", 1, "emp_sd", 0.033,
           0.043, ""},
          {"cont-cor b1 emp sd < IPW b1 emp sd", "cont-cor", 1, "emp_sd", 0, 0,
           "IPW"},
          {"pooled b1 bias in 0.753+-0.02", "pooled", 1, "bias", 0.733, 0.773, ""},
          {"pooled b1 coverage <= 0.01", "pooled", 1, "coverage", 0.0, 0.01, ""},
          {"Dind b1 bias in 0.149+-0.02", "Dind", 1, "bias", 0.129, 0.169, ""},
      };
    case ScenarioKind::IdentityTwoCov: {
      V v;
      for (Index j = 0; j < 4; ++j)
        v.push_back({"cont-cor MSE <= IPW MSE (b" + std::to_string(j) + ")",
                     "cont-cor", j, "mse", 0, 0, "IPW"});
      v.push_back({"cont-cor b3 MSE in 0.022+-0.007", "cont-cor", 3, "mse",
                   0.015, 0.029, ""});
      v.push_back({"IPW b3 MSE in 0.076+-0.02", "IPW", 3, "mse", 0.056, 0.096,
                   ""});
      v.push_back({"cont-cor b1 coverage in [0.93,0.985]", "cont-cor", 1,
                   "coverage", 0.93, 0.985, ""});
      v.push_back({"cont-cor b2 coverage in [0.93,0.985]", "cont-cor", 2,
                   "coverage", 0.93, 0.985, ""});
      v.push_back({"cont-mis2 b3 coverage in 0.775+-0.05", "cont-mis2", 3,
                   "coverage", 0.725, 0.825, ""});
      v.push_back({"cont-mis2 b3 coverage < 0.90", "cont-mis2", 3, "coverage",
                   0.0, 0.90, ""});
      return v;
    }
    case ScenarioKind::SnpSettings2:
      return V{
          {"cont b1 |bias| <= 0.01", "cont", 1, "bias_abs", 0.0, 0.01, ""},
          {"IPW b1 |bias| <= 0.01", "IPW", 1, "bias_abs", 0.0, 0.01, ""},
          {"cont b1 emp sd in 0.043+-0.006", "cont", 1, "emp_sd", 0.037, 0.049,
           ""},
          {"IPW b1 emp sd in 0.043+-0.006", "IPW", 1, "emp_sd", 0.037, 0.049,
           ""},
          {"cont b1 coverage in 0.946+-0.02", "cont", 1, "coverage", 0.926,
           0.966, ""},
          {"IPW b1 coverage in 0.948+-0.02", "IPW", 1, "coverage", 0.928, 0.968,
           ""},
      };
    case ScenarioKind::LogPoisson:
      return V{
          {"IPW b0 coverage in 0.944+-0.02", "IPW", 0, "coverage", 0.924, 0.964,
           ""},
          {"cont-cor b0 |bias| <= 0.03", "cont-cor", 0, "bias_abs", 0.0, 0.03,
           ""},
          {"cont-cor b0 emp sd in 0.151+-0.03", "cont-cor", 0, "emp_sd", 0.121,
           0.181, ""},
          {"cont-cor b0 coverage >= 0.99", "cont-cor", 0, "coverage", 0.99, 1.0,
           ""},
      };
    case ScenarioKind::Custom: break;
  }
  return {};
}

inline std::vector<CheckResult> evaluate_checks(
    const SimulationSummary& summary, const std::vector<SummaryCheck>& checks) {
  std::vector<CheckResult> out;
  out.reserve(checks.size());
  for (const auto& c : checks) {
    CheckResult r;
    r.label = c.label;
    r.observed = detail::summary_stat(summary, c.estimator, c.coef, c.stat);
    if (!c.other.empty()) {
      const double rhs = detail::summary_stat(summary, c.other, c.coef, c.stat);
      r.lo = 0.0;
      r.hi = rhs;
      r.pass = r.observed <= rhs;
    } else {
      r.lo = c.lo;
      r.hi = c.hi;
      r.pass = r.observed >= c.lo && r.observed <= c.hi;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ccsec
