#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace ccsec {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors. Every throw carries the stage that failed so callers (CLI, the
// simulation harness) can report it without string surgery.
// ---------------------------------------------------------------------------

class error : public std::runtime_error {
 public:
  error(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class invalid_dataset : public error {
 public:
  explicit invalid_dataset(const std::string& what) : error("dataset", what) {}
};

class degenerate_design : public error {
 public:
  degenerate_design(const std::string& stage, const std::string& what)
      : error(stage, what) {}
};

class rank_error : public error {
 public:
  rank_error(const std::string& stage, const std::string& what)
      : error(stage, what) {}
};

class convergence_error : public error {
 public:
  convergence_error(const std::string& stage, const std::string& what)
      : error(stage, what) {}
};

class separation_error : public error {
 public:
  explicit separation_error(const std::string& what)
      : error("disease_model", what) {}
};

// ---------------------------------------------------------------------------
// Link functions
// ---------------------------------------------------------------------------

enum class Link { Identity, Log };

inline const char* link_name(Link link) {
  return link == Link::Identity ? "identity" : "log";
}

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Inverse link applied elementwise: eta for identity, exp(eta) for log.
inline VectorXd link_inverse(Link link, const VectorXd& eta) {
  if (link == Link::Identity) return eta;
  return eta.array().exp().matrix();
}

inline double link_inverse(Link link, double eta) {
  return link == Link::Identity ? eta : std::exp(eta);
}

// ---------------------------------------------------------------------------
// Case-control design: known population prevalence plus sampled class counts.
// Weights follow the sum-to-n convention: w1 = q*n/n1, w0 = (1-q)*n/n0, so
// sum(w) = n and the weighted case fraction equals q.
// ---------------------------------------------------------------------------

struct CaseControlDesign {
  double prevalence = 0.0;  // population P(D=1)
  Index n_cases = 0;
  Index n_controls = 0;

  Index n() const { return n_cases + n_controls; }

  double case_weight() const {
    return prevalence * static_cast<double>(n()) / static_cast<double>(n_cases);
  }
  double control_weight() const {
    return (1.0 - prevalence) * static_cast<double>(n()) /
           static_cast<double>(n_controls);
  }
  /// Sample case fraction c = n1/n.
  double case_fraction() const {
    return static_cast<double>(n_cases) / static_cast<double>(n());
  }

  void validate() const {
    if (!(prevalence > 0.0 && prevalence < 1.0))
      throw degenerate_design("design", "prevalence must lie in (0,1)");
    if (n_cases < 1 || n_controls < 1)
      throw degenerate_design("design", "need at least one case and one control");
  }

  static CaseControlDesign from_sample(const VectorXd& d, double prevalence) {
    CaseControlDesign design;
    design.prevalence = prevalence;
    design.n_cases = static_cast<Index>(d.sum());
    design.n_controls = d.size() - design.n_cases;
    design.validate();
    return design;
  }
};

/// Per-subject IPW weights for a 0/1 disease vector.
inline VectorXd compute_weights(const CaseControlDesign& design, const VectorXd& d) {
  design.validate();
  Index n1 = 0;
  for (Index i = 0; i < d.size(); ++i) {
    if (d[i] == 1.0)
      ++n1;
    else if (d[i] != 0.0)
      throw invalid_dataset("disease indicator must be 0 or 1");
  }
  if (n1 != design.n_cases || d.size() - n1 != design.n_controls)
    throw degenerate_design("design", "class counts do not match the design");
  const double w1 = design.case_weight();
  const double w0 = design.control_weight();
  VectorXd w(d.size());
  for (Index i = 0; i < d.size(); ++i) w[i] = d[i] == 1.0 ? w1 : w0;
  return w;
}

// ---------------------------------------------------------------------------
// Dataset: outcome, disease indicator, and the three design matrices.
// Intercept columns are the caller's responsibility.
// ---------------------------------------------------------------------------

struct Dataset {
  VectorXd y;       // secondary outcome
  VectorXd d;       // disease indicator, 0/1
  MatrixXd x_mean;  // design for mu(X; beta), n x q
  MatrixXd x_sel;   // design for gamma(X; delta) / nu(X,D; delta), n x r
  MatrixXd x_dis;   // design for p(X; alpha), n x s

  Index n() const { return y.size(); }
  Index q() const { return x_mean.cols(); }
  Index r() const { return x_sel.cols(); }
  Index s() const { return x_dis.cols(); }

  void validate() const {
    const Index m = n();
    if (m < 1) throw invalid_dataset("empty dataset");
    if (d.size() != m || x_mean.rows() != m || x_sel.rows() != m ||
        x_dis.rows() != m)
      throw invalid_dataset("row counts differ across columns");
    Index n1 = 0;
    for (Index i = 0; i < m; ++i) {
      if (d[i] == 1.0)
        ++n1;
      else if (d[i] != 0.0)
        throw invalid_dataset("disease indicator must be 0 or 1");
    }
    if (n1 == 0 || n1 == m)
      throw invalid_dataset("need at least one case and one control");
    if (!y.allFinite() || !x_mean.allFinite() || !x_sel.allFinite() ||
        !x_dis.allFinite())
      throw invalid_dataset("non-finite entries");
  }

  /// Link-specific outcome check, applied at fit time.
  void validate_for(Link link) const {
    validate();
    if (link == Link::Log && (y.array() < 0.0).any())
      throw invalid_dataset("log link requires a nonnegative outcome");
  }
};

/// Throws unless the matrix has full column rank.
inline void require_full_rank(const MatrixXd& x, const std::string& stage) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  if (qr.rank() < x.cols())
    throw rank_error(stage, "design matrix is rank deficient");
}

// ---------------------------------------------------------------------------
// Selection-bias function. Identity link: gamma(X) = x_sel * delta.
// Log link: nu(X, D) = D * (x_sel * delta), so nu(X, 0) = 0 by construction.
// ---------------------------------------------------------------------------

struct SelectionBias {
  Link link = Link::Identity;
  VectorXd delta;

  /// gamma(X) (identity) or nu(X, d) (log) for one row.
  double eval(const VectorXd& x_sel_row, double d) const {
    const double u = delta.dot(x_sel_row);
    return link == Link::Identity ? u : d * u;
  }
};

// ---------------------------------------------------------------------------
// Fit output shared by all estimators.
// ---------------------------------------------------------------------------

enum class EstimatorTag { IPW, ContIdentity, ContLog, Pooled, Dind };

inline const char* estimator_name(EstimatorTag tag) {
  switch (tag) {
    case EstimatorTag::IPW: return "ipw";
    case EstimatorTag::ContIdentity: return "cont-identity";
    case EstimatorTag::ContLog: return "cont-log";
    case EstimatorTag::Pooled: return "pooled";
    case EstimatorTag::Dind: return "dind";
  }
  return "?";
}

struct EstimateResult {
  VectorXd beta;
  VectorXd delta;       // empty unless a control-function fit
  VectorXd alpha;       // empty unless the disease model was used
  MatrixXd covariance;  // over the reported parameters
  VectorXd std_errors;  // sqrt of the covariance diagonal
  bool converged = false;
  int iterations = 0;
  EstimatorTag tag = EstimatorTag::IPW;
};

}  // namespace ccsec
