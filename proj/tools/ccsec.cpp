// Command-line front end: `analyze` fits the estimators on a CSV data set,
// `simulate` runs the Monte Carlo scenarios.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ccsec/ccsec.hpp"

namespace {

std::vector<std::string> split_list(const std::string& cs/*comma separated*/) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(cs);
  while (std::getline(is, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

ccsec::ScenarioKind parse_scenario(const std::string& name) {
  if (name == "identity-single") return ccsec::ScenarioKind::IdentitySingle;
  if (name == "identity-two-cov") return ccsec::ScenarioKind::IdentityTwoCov;
  if (name == "snp-settings2") return ccsec::ScenarioKind::SnpSettings2;
  if (name == "log-poisson") return ccsec::ScenarioKind::LogPoisson;
  throw ccsec::error("scenario", "unknown scenario '" + name + "'");
}

void write_summary_json(const ccsec::SimulationSummary& summary,
                        std::ostream& os) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : summary.rows) {
    nlohmann::json obj;
    obj["estimator"] = r.estimator;
    obj["coefficient"] = r.coefficient;
    obj["truth"] = r.truth;
    obj["bias"] = r.bias;
    obj["mse"] = r.mse;
    if (r.emp_sd) obj["emp_sd"] = *r.emp_sd;
    obj["est_sd"] = r.est_sd;
    obj["coverage"] = r.coverage;
    obj["n_failed"] = r.n_failed;
    arr.push_back(std::move(obj));
  }
  os << arr.dump(2) << '\n';
}

int run_analyze(const ccsec::AnalyzeRequest& req, const std::string& output,
                const std::string& format) {
  ccsec::AnalyzeTable table = ccsec::analyze(req);
  std::ostringstream buf;
  if (format == "json")
    ccsec::write_analyze_json(table, buf);
  else
    ccsec::write_analyze_csv(table, buf);
  if (output.empty()) {
    std::cout << buf.str();
  } else {
    std::ofstream os(output, std::ios::binary);
    if (!os) throw ccsec::error("analyze", "cannot write '" + output + "'");
    os << buf.str();
  }
  return 0;
}

int run_simulate(const std::string& scenario, const std::string& config_path,
                 int reps, std::uint64_t seed, int threads, long pool,
                 const std::string& output, const std::string& format,
                 bool check) {
  ccsec::ScenarioConfig config;
  if (!config_path.empty()) {
    config = ccsec::scenario_from_json_file(config_path);
  } else {
    config = ccsec::make_scenario(parse_scenario(scenario));
  }
  if (reps > 0) config.n_replicates = reps;
  config.seed = seed;
  config.workers = threads;
  if (pool > 0) config.pool_size = pool;

  ccsec::SimulationSummary summary = ccsec::run_replicates(config);
  ccsec::write_summary_report(summary, std::cout);

  if (!output.empty()) {
    std::ofstream os(output, std::ios::binary);
    if (!os) throw ccsec::error("simulate", "cannot write '" + output + "'");
    if (format == "json")
      write_summary_json(summary, os);
    else
      ccsec::write_summary_csv(summary, os);
  }

  if (check) {
    const auto checks = ccsec::scenario_checks(config.kind);
    if (checks.empty()) {
      std::cerr << "no reference bounds for this scenario\n";
      return 2;
    }
    bool all_pass = true;
    std::cout << '\n';
    for (const auto& r : ccsec::evaluate_checks(summary, checks)) {
      std::printf("%s  %s (observed %.4g, bounds [%.4g, %.4g])\n",
                  r.pass ? "PASS" : "FAIL", r.label.c_str(), r.observed, r.lo,
                  r.hi);
      all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Secondary-outcome regression for case-control studies"};
  app.require_subcommand(1);

  // ---- analyze ----
  auto* analyze = app.add_subcommand("analyze", "fit estimators on a CSV file");
  ccsec::AnalyzeRequest req;
  std::string mean_cols, sel_cols, dis_cols, estimators = "ipw,cont";
  std::string scan_cols, link = "identity", output, format = "csv";
  int threads = 1;
  analyze->add_option("--input", req.input_path, "input CSV path")->required();
  analyze->add_option("--outcome", req.outcome_col, "outcome column")->required();
  analyze->add_option("--disease", req.disease_col, "disease indicator column")
      ->required();
  analyze->add_option("--mean-design", mean_cols,
                      "comma list of mean-model columns ('1' = constant)")
      ->required();
  analyze->add_option("--sel-design", sel_cols,
                      "comma list of selection-bias columns");
  analyze->add_option("--dis-design", dis_cols,
                      "comma list of disease-model columns");
  analyze->add_option("--link", link, "identity|log")
      ->check(CLI::IsMember({"identity", "log"}));
  analyze->add_option("--prevalence", req.prevalence,
                      "population disease prevalence (required)")
      ->required();
  analyze->add_option("--estimators", estimators,
                      "comma list from ipw,cont,pooled,dind");
  analyze->add_option("--scan", scan_cols,
                      "comma list of exposure columns for a per-exposure scan");
  analyze->add_option("--threads", threads, "scan-mode worker threads");
  analyze->add_option("--output", output, "output file (stdout if omitted)");
  analyze->add_option("--format", format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));

  // ---- simulate ----
  auto* simulate = app.add_subcommand("simulate", "run a Monte Carlo scenario");
  std::string scenario, config_path, sim_output, sim_format = "csv";
  int reps = 0, sim_threads = 0;
  long pool = 0;
  std::uint64_t seed = 1;
  bool check = false;
  simulate->add_option("--scenario", scenario,
                       "identity-single|identity-two-cov|snp-settings2|log-poisson");
  simulate->add_option("--config", config_path, "custom scenario JSON file");
  simulate->add_option("--reps", reps, "replicate count (default per scenario)");
  simulate->add_option("--seed", seed, "master seed");
  simulate->add_option("--threads", sim_threads, "worker threads (0 = auto)");
  simulate->add_option("--pool", pool, "population pool size per replicate");
  simulate->add_option("--output", sim_output, "summary CSV/JSON path");
  simulate->add_option("--format", sim_format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  simulate->add_flag("--check", check,
                     "verify the summary against the published bounds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) {
      req.mean_cols = split_list(mean_cols);
      req.sel_cols = split_list(sel_cols);
      req.dis_cols = split_list(dis_cols);
      if (req.sel_cols.empty()) req.sel_cols = req.mean_cols;
      if (req.dis_cols.empty()) req.dis_cols = req.mean_cols;
      req.estimators = split_list(estimators);
      req.scan_cols = split_list(scan_cols);
      req.link = link == "log" ? ccsec::Link::Log : ccsec::Link::Identity;
      req.threads = threads;
      return run_analyze(req, output, format);
    }
    if (*simulate) {
      if (scenario.empty() == config_path.empty())
        throw ccsec::error("simulate",
                           "give exactly one of --scenario or --config");
      return run_simulate(scenario, config_path, reps, seed, sim_threads, pool,
                          sim_output, sim_format, check);
    }
  } catch (const ccsec::error& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
