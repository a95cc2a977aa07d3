#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ccsec/core.hpp"
#include "ccsec/csv.hpp"
#include "ccsec/estimators.hpp"

namespace ccsec {

// ---------------------------------------------------------------------------
// Holm step-down adjustment. adj_(i) = max_{j<=i} min(1, (m-j+1) p_(j)) over
// the ascending order of raw p-values.
// ---------------------------------------------------------------------------

inline std::vector<double> holm_adjust(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m, 0.0);
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double scaled = std::min(1.0, static_cast<double>(m - j) * p[order[j]]);
    running = std::max(running, scaled);
    adj[order[j]] = running;
  }
  return adj;
}

/// Two-sided normal p-value for a Wald z statistic.
inline double wald_pvalue(double z) {
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

// ---------------------------------------------------------------------------
// CSV analysis front end.
// ---------------------------------------------------------------------------

struct AnalyzeRequest {
  std::string input_path;
  std::string outcome_col;
  std::string disease_col;
  std::vector<std::string> mean_cols;  // token "1" denotes a constant column
  std::vector<std::string> sel_cols;
  std::vector<std::string> dis_cols;
  Link link = Link::Identity;
  double prevalence = 0.0;
  std::vector<std::string> estimators;  // ipw | cont | pooled | dind
  std::vector<std::string> scan_cols;
  int threads = 1;
};

struct AnalyzeRow {
  std::string estimator;
  std::string exposure;     // scan mode only
  std::string coefficient;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double z = std::numeric_limits<double>::quiet_NaN();
  double p_raw = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> p_holm;
  std::string status = "ok";
};

struct AnalyzeTable {
  std::vector<AnalyzeRow> rows;
};

namespace detail {

inline VectorXd csv_column(const CsvTable& table, const std::string& name) {
  const Index j = table.find(name);
  VectorXd out(static_cast<Index>(table.rows.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    out[static_cast<Index>(i)] =
        parse_double(table.rows[i][static_cast<std::size_t>(j)],
                     "row " + std::to_string(i + 2) + ", column " + name);
  return out;
}

inline MatrixXd design_from(const CsvTable& table,
                            const std::vector<std::string>& cols) {
  MatrixXd x(static_cast<Index>(table.rows.size()),
             static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] == "1")
      x.col(static_cast<Index>(j)).setOnes();
    else
      x.col(static_cast<Index>(j)) = csv_column(table, cols[j]);
  }
  return x;
}

inline EstimateResult dispatch_fit(const std::string& name, const Dataset& data,
                                   Link link, const CaseControlDesign& design) {
  if (name == "ipw") return fit_ipw(data, link, design);
  if (name == "cont") return fit_cont(data, link, design);
  if (name == "pooled") return fit_naive_pooled(data, link);
  if (name == "dind") return fit_naive_dind(data, link);
  throw error("analyze", "unknown estimator '" + name + "'");
}

inline void push_coef_rows(AnalyzeTable& out, const std::string& estimator,
                           const EstimateResult& res,
                           const std::vector<std::string>& mean_names,
                           const std::vector<std::string>& sel_names) {
  for (Index j = 0; j < res.beta.size(); ++j) {
    AnalyzeRow row;
    row.estimator = estimator;
    row.coefficient = mean_names[static_cast<std::size_t>(j)];
    row.estimate = res.beta[j];
    row.se = res.std_errors[j];
    row.z = row.estimate / row.se;
    row.p_raw = wald_pvalue(row.z);
    out.rows.push_back(std::move(row));
  }
  for (Index j = 0; j < res.delta.size(); ++j) {
    AnalyzeRow row;
    row.estimator = estimator;
    row.coefficient = "sel:" + sel_names[static_cast<std::size_t>(j)];
    row.estimate = res.delta[j];
    row.se = res.std_errors[res.beta.size() + j];
    row.z = row.estimate / row.se;
    row.p_raw = wald_pvalue(row.z);
    out.rows.push_back(std::move(row));
  }
}

}  // namespace detail

inline AnalyzeTable analyze(const AnalyzeRequest& req) {
  if (!(req.prevalence > 0.0 && req.prevalence < 1.0))
    throw error("analyze", "prevalence must lie in (0,1)");
  const CsvTable table = read_csv_file(req.input_path);

  Dataset base;
  base.y = detail::csv_column(table, req.outcome_col);
  base.d = detail::csv_column(table, req.disease_col);
  base.x_mean = detail::design_from(table, req.mean_cols);
  base.x_sel = detail::design_from(table, req.sel_cols);
  base.x_dis = detail::design_from(table, req.dis_cols);
  base.validate_for(req.link);
  const CaseControlDesign design =
      CaseControlDesign::from_sample(base.d, req.prevalence);

  AnalyzeTable out;
  if (req.scan_cols.empty()) {
    for (const auto& est : req.estimators) {
      EstimateResult res = detail::dispatch_fit(est, base, req.link, design);
      detail::push_coef_rows(out, est, res, req.mean_cols, req.sel_cols);
    }
    return out;
  }

  // Exposure scan: one refit per scan column, the column appended to all
  // three designs; Holm adjustment per estimator across the scan.
  const std::size_t n_scan = req.scan_cols.size();
  std::vector<std::vector<AnalyzeRow>> slots(n_scan);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t s = next.fetch_add(1);
      if (s >= n_scan) break;
      const std::string& col = req.scan_cols[s];
      AnalyzeRow proto;
      proto.exposure = col;
      proto.coefficient = col;
      try {
        VectorXd xcol = detail::csv_column(table, col);
        Dataset scan = base;
        scan.x_mean.conservativeResize(Eigen::NoChange, base.x_mean.cols() + 1);
        scan.x_mean.col(base.x_mean.cols()) = xcol;
        scan.x_sel.conservativeResize(Eigen::NoChange, base.x_sel.cols() + 1);
        scan.x_sel.col(base.x_sel.cols()) = xcol;
        scan.x_dis.conservativeResize(Eigen::NoChange, base.x_dis.cols() + 1);
        scan.x_dis.col(base.x_dis.cols()) = xcol;
        for (const auto& est : req.estimators) {
          AnalyzeRow row = proto;
          row.estimator = est;
          try {
            EstimateResult res =
                detail::dispatch_fit(est, scan, req.link, design);
            const Index j = res.beta.size() - 1;  // appended exposure column
            row.estimate = res.beta[j];
            row.se = res.std_errors[j];
            row.z = row.estimate / row.se;
            row.p_raw = wald_pvalue(row.z);
          } catch (const error& e) {
            row.status = "error: " + e.stage();
          } catch (const std::exception&) {
            row.status = "error: fit";
          }
          slots[s].push_back(std::move(row));
        }
      } catch (const error& e) {
        for (const auto& est : req.estimators) {
          AnalyzeRow row = proto;
          row.estimator = est;
          row.status = "error: " + e.stage();
          slots[s].push_back(std::move(row));
        }
      }
    }
  };
  int n_workers = std::max(1, req.threads);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // output ordered by estimator then input column order
  for (const auto& est : req.estimators)
    for (std::size_t s = 0; s < n_scan; ++s)
      for (const auto& row : slots[s])
        if (row.estimator == est) out.rows.push_back(row);

  for (const auto& est : req.estimators) {
    std::vector<std::size_t> ok_rows;
    std::vector<double> p;
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      if (out.rows[i].estimator == est && out.rows[i].status == "ok") {
        ok_rows.push_back(i);
        p.push_back(out.rows[i].p_raw);
      }
    }
    const auto adj = holm_adjust(p);
    for (std::size_t k = 0; k < ok_rows.size(); ++k)
      out.rows[ok_rows[k]].p_holm = adj[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization. One schema for both modes keeps outputs deterministic.
// ---------------------------------------------------------------------------

inline void write_analyze_csv(const AnalyzeTable& table, std::ostream& os) {
  os << "estimator,exposure,coefficient,estimate,se,z,p_raw,p_holm,status\n";
  for (const auto& r : table.rows) {
    os << r.estimator << ',' << r.exposure << ',' << r.coefficient << ',';
    if (r.status == "ok")
      os << format_double(r.estimate) << ',' << format_double(r.se) << ','
         << format_double(r.z) << ',' << format_double(r.p_raw);
    else
      os << ",,,";
    os << ',';
    if (r.p_holm) os << format_double(*r.p_holm);
    os << ',' << r.status << '\n';
  }
}

inline void write_analyze_json(const AnalyzeTable& table, std::ostream& os) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json obj;
    obj["estimator"] = r.estimator;
    if (!r.exposure.empty()) obj["exposure"] = r.exposure;
    obj["coefficient"] = r.coefficient;
    obj["status"] = r.status;
    if (r.status == "ok") {
      obj["estimate"] = r.estimate;
      obj["se"] = r.se;
      obj["z"] = r.z;
      obj["p_raw"] = r.p_raw;
    }
    if (r.p_holm) obj["p_holm"] = *r.p_holm;
    arr.push_back(std::move(obj));
  }
  os << arr.dump(2) << '\n';
}

}  // namespace ccsec
