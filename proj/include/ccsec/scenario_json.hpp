#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccsec/simulation.hpp"

namespace ccsec {

// Custom-scenario config files, e.g.
//   {
//     "link": "identity",
//     "covariates": [{"name":"X1","dist":"normal","mean":2,"sd":4},
//                    {"name":"X2","dist":"bernoulli","p":0.1},
//                    {"name":"G","dist":"binomial","trials":2,"p":0.3}],
//     "disease": {"intercept":-3.2,"terms":[{"coef":0.3,"vars":["X1"]}]},
//     "mean": {"terms":[{"coef":50,"vars":[]},{"coef":4,"vars":["X1"]}]},
//     "selection": {"terms":[{"coef":3,"vars":[]},{"coef":2,"vars":["X1"]}]},
//     "resid_sd": 2.0,
//     "n_cases": 500, "n_controls": 500, "replicates": 1000,
//     "seed": 1, "pool": 50000,
//     "estimators": [{"name":"cont","kind":"cont","sel_cols":[0,1]},
//                    {"name":"IPW","kind":"ipw"}]
//   }

namespace detail {

inline int covariate_index(const GeneratorSpec& gen, const std::string& name) {
  for (std::size_t j = 0; j < gen.covariates.size(); ++j)
    if (gen.covariates[j].name == name) return static_cast<int>(j);
  throw error("config", "unknown covariate '" + name + "'");
}

inline std::vector<TermSpec> parse_terms(const GeneratorSpec& gen,
                                         const nlohmann::json& terms) {
  std::vector<TermSpec> out;
  for (const auto& t : terms) {
    TermSpec spec;
    spec.coef = t.at("coef").get<double>();
    for (const auto& v : t.at("vars"))
      spec.vars.push_back(covariate_index(gen, v.get<std::string>()));
    out.push_back(std::move(spec));
  }
  return out;
}

}  // namespace detail

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  c.kind = ScenarioKind::Custom;

  const std::string link = j.value("link", "identity");
  if (link == "identity")
    c.gen.link = Link::Identity;
  else if (link == "log")
    c.gen.link = Link::Log;
  else
    throw error("config", "link must be 'identity' or 'log'");

  for (const auto& cv : j.at("covariates")) {
    const std::string name = cv.at("name").get<std::string>();
    const std::string dist = cv.at("dist").get<std::string>();
    if (dist == "normal")
      c.gen.covariates.push_back(CovariateSpec::normal(
          name, cv.at("mean").get<double>(), cv.at("sd").get<double>()));
    else if (dist == "bernoulli")
      c.gen.covariates.push_back(
          CovariateSpec::bernoulli(name, cv.at("p").get<double>()));
    else if (dist == "binomial")
      c.gen.covariates.push_back(CovariateSpec::binomial(
          name, cv.at("trials").get<int>(), cv.at("p").get<double>()));
    else
      throw error("config", "unknown covariate distribution '" + dist + "'");
  }

  const auto& dis = j.at("disease");
  c.gen.dis_intercept = dis.at("intercept").get<double>();
  c.gen.dis_terms = detail::parse_terms(c.gen, dis.at("terms"));
  c.gen.mean_terms = detail::parse_terms(c.gen, j.at("mean").at("terms"));
  c.gen.sel_terms = detail::parse_terms(c.gen, j.at("selection").at("terms"));
  c.gen.resid_sd = j.value("resid_sd", 1.0);

  c.n_cases = j.value("n_cases", 500);
  c.n_controls = j.value("n_controls", 500);
  c.n_replicates = j.value("replicates", 1000);
  c.seed = j.value("seed", std::uint64_t{1});
  c.pool_size = j.value("pool", 50000);

  for (const auto& e : j.at("estimators")) {
    EstimatorSpec spec;
    spec.name = e.at("name").get<std::string>();
    const std::string kind = e.at("kind").get<std::string>();
    if (kind == "ipw")
      spec.kind = EstimatorSpec::Kind::Ipw;
    else if (kind == "cont")
      spec.kind = EstimatorSpec::Kind::Cont;
    else if (kind == "pooled")
      spec.kind = EstimatorSpec::Kind::Pooled;
    else if (kind == "dind")
      spec.kind = EstimatorSpec::Kind::Dind;
    else
      throw error("config", "unknown estimator kind '" + kind + "'");
    if (e.contains("sel_cols"))
      for (const auto& s : e.at("sel_cols")) spec.sel_cols.push_back(s.get<int>());
    c.estimators.push_back(std::move(spec));
  }
  c.validate();
  return c;
}

inline ScenarioConfig scenario_from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw error("config", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw error("config", std::string("malformed JSON: ") + e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw error("config", std::string("malformed config: ") + e.what());
  }
}

}  // namespace ccsec
