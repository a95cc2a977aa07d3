#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "ccsec/analysis.hpp"
#include "ccsec/simulation.hpp"

using namespace ccsec;

namespace {

// writes a small seeded case-control CSV fixture and returns its path
std::string write_fixture(std::uint64_t seed, Index n1, Index n0) {
  ScenarioConfig cfg = make_identity_two_cov();
  std::mt19937_64 rng(seed);
  Population pop = generate_population(cfg.gen, 20000, rng);
  Dataset cc = sample_case_control(pop.data, n1, n0, seed + 1);
  std::string path = "fixture_" + std::to_string(seed) + ".csv";
  std::ofstream os(path, std::ios::binary);
  os << "y,dis,x1,x2,x1x2\n";
  for (Index i = 0; i < cc.n(); ++i)
    os << format_double(cc.y[i]) << ',' << cc.d[i] << ','
       << format_double(cc.x_mean(i, 1)) << ',' << format_double(cc.x_mean(i, 2))
       << ',' << format_double(cc.x_mean(i, 3)) << '\n';
  return path;
}

AnalyzeRequest base_request(const std::string& path) {
  AnalyzeRequest req;
  req.input_path = path;
  req.outcome_col = "y";
  req.disease_col = "dis";
  req.mean_cols = {"1", "x1", "x2", "x1x2"};
  req.sel_cols = {"1", "x1", "x2", "x1x2"};
  req.dis_cols = {"1", "x1", "x2"};
  req.link = Link::Identity;
  req.prevalence = 0.12;
  req.estimators = {"ipw", "cont"};
  return req;
}

}  // namespace

TEST_CASE("holm adjustment") {
  SECTION("worked example") {
    std::vector<double> p = {0.01, 0.04, 0.03, 0.005};
    auto adj = holm_adjust(p);
    // sorted: 0.005, 0.01, 0.03, 0.04 with multipliers 4, 3, 2, 1
    REQUIRE(adj[3] == Catch::Approx(0.02));   // 4 * 0.005
    REQUIRE(adj[0] == Catch::Approx(0.03));   // max(0.02, 3 * 0.01)
    REQUIRE(adj[2] == Catch::Approx(0.06));   // max(0.03, 2 * 0.03)
    REQUIRE(adj[1] == Catch::Approx(0.06));   // max(0.06, 1 * 0.04)
  }
  SECTION("monotone, dominates raw, capped at one: m = 152") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> p(152);
    for (auto& v : p) v = std::pow(unif(rng), 3.0);
    auto adj = holm_adjust(p);
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    double prev = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t i = order[k];
      REQUIRE(adj[i] >= p[i]);
      REQUIRE(adj[i] <= 1.0);
      REQUIRE(adj[i] >= prev);
      // step-down formula at rank k
      const double direct =
          std::min(1.0, static_cast<double>(p.size() - k) * p[i]);
      REQUIRE(adj[i] >= direct - 1e-15);
      prev = adj[i];
    }
    // first entry equals m * p_(1) when below one
    REQUIRE(adj[order[0]] ==
            Catch::Approx(std::min(1.0, 152.0 * p[order[0]])));
  }
}

TEST_CASE("self-weighting analyze reduces IPW to OLS") {
  const std::string path = write_fixture(201, 150, 150);
  AnalyzeRequest req = base_request(path);
  req.estimators = {"ipw", "pooled"};
  req.prevalence = 0.5;  // equals the sample case fraction
  AnalyzeTable table = analyze(req);
  // rows: 4 ipw + 4 pooled coefficients; estimates must agree pairwise
  REQUIRE(table.rows.size() == 8);
  for (std::size_t j = 0; j < 4; ++j) {
    REQUIRE(table.rows[j].estimate ==
            Catch::Approx(table.rows[j + 4].estimate).margin(1e-10));
  }
  std::remove(path.c_str());
}

TEST_CASE("analyze output is deterministic and round-trips") {
  const std::string path = write_fixture(202, 120, 180);
  AnalyzeRequest req = base_request(path);
  AnalyzeTable t1 = analyze(req);
  AnalyzeTable t2 = analyze(req);
  std::ostringstream os1, os2;
  write_analyze_csv(t1, os1);
  write_analyze_csv(t2, os2);
  REQUIRE(os1.str() == os2.str());

  // CSV round-trip at full precision
  std::istringstream is(os1.str());
  CsvTable parsed = read_csv(is);
  REQUIRE(parsed.rows.size() == t1.rows.size());
  const Index est_col = parsed.find("estimate");
  for (std::size_t i = 0; i < t1.rows.size(); ++i) {
    const double back = parse_double(
        parsed.rows[i][static_cast<std::size_t>(est_col)], "estimate");
    REQUIRE(back == t1.rows[i].estimate);  // bitwise after %.17g
  }
  std::remove(path.c_str());
}

TEST_CASE("exposure scan with Holm adjustment and per-row failures") {
  const std::string path = write_fixture(203, 150, 150);
  AnalyzeRequest req = base_request(path);
  req.mean_cols = {"1", "x1"};
  req.sel_cols = {"1", "x1"};
  req.dis_cols = {"1", "x1"};
  req.estimators = {"ipw"};
  req.scan_cols = {"x2", "x1x2", "x1"};  // last one duplicates a base column
  req.threads = 2;
  AnalyzeTable table = analyze(req);
  REQUIRE(table.rows.size() == 3);
  // the duplicated column is rank deficient -> per-row error, scan continues
  REQUIRE(table.rows[2].status != "ok");
  REQUIRE_FALSE(table.rows[2].p_holm.has_value());
  std::vector<double> p;
  for (int i = 0; i < 2; ++i) {
    REQUIRE(table.rows[static_cast<std::size_t>(i)].status == "ok");
    REQUIRE(table.rows[static_cast<std::size_t>(i)].p_holm.has_value());
    p.push_back(table.rows[static_cast<std::size_t>(i)].p_raw);
  }
  auto adj = holm_adjust(p);
  for (int i = 0; i < 2; ++i)
    REQUIRE(*table.rows[static_cast<std::size_t>(i)].p_holm ==
            Catch::Approx(adj[static_cast<std::size_t>(i)]));
  std::remove(path.c_str());
}

TEST_CASE("analyze error paths") {
  const std::string path = write_fixture(204, 80, 80);
  SECTION("missing column") {
    AnalyzeRequest req = base_request(path);
    req.mean_cols = {"1", "nope"};
    REQUIRE_THROWS_AS(analyze(req), error);
  }
  SECTION("bad prevalence") {
    AnalyzeRequest req = base_request(path);
    req.prevalence = 1.5;
    REQUIRE_THROWS_AS(analyze(req), error);
  }
  SECTION("non-numeric cell") {
    std::ofstream os("bad.csv", std::ios::binary);
    os << "y,dis,x\n1.0,0,2.0\nribbit,1,3.0\n";
    os.close();
    AnalyzeRequest req;
    req.input_path = "bad.csv";
    req.outcome_col = "y";
    req.disease_col = "dis";
    req.mean_cols = {"1", "x"};
    req.sel_cols = {"1"};
    req.dis_cols = {"1", "x"};
    req.prevalence = 0.2;
    req.estimators = {"pooled"};
    REQUIRE_THROWS_WITH(analyze(req),
                        Catch::Matchers::ContainsSubstring("non-numeric"));
    std::remove("bad.csv");
  }
  std::remove(path.c_str());
}

TEST_CASE("json output carries the same rows") {
  const std::string path = write_fixture(205, 100, 100);
  AnalyzeRequest req = base_request(path);
  req.estimators = {"ipw"};
  AnalyzeTable table = analyze(req);
  std::ostringstream os;
  write_analyze_json(table, os);
  auto parsed = nlohmann::json::parse(os.str());
  REQUIRE(parsed.is_array());
  REQUIRE(parsed.size() == table.rows.size());
  REQUIRE(parsed[0]["estimator"] == "ipw");
  REQUIRE(parsed[0]["status"] == "ok");
  REQUIRE(parsed[0]["estimate"].get<double>() == table.rows[0].estimate);
  std::remove(path.c_str());
}
