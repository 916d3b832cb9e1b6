#include <catch_amalgamated.hpp>

#include <omp.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lsgp/errors.hpp"
#include "lsgp/harness.hpp"
#include "oracles.hpp"

using namespace lsgp;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
namespace fs = std::filesystem;

namespace {

ExperimentConfig brownian(std::vector<double> us, long n_paths, std::uint64_t seed) {
  ExperimentConfig c;
  c.kernel = KernelSpec::fbm(1.0);
  c.process = ProcessKind::RAW;
  c.u_ladder = std::move(us);
  c.n_points = 129;
  c.n_paths = n_paths;
  c.seed = seed;
  c.asymptotics.enabled = false;
  return c;
}

std::string domain_error(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const DomainError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lsgp_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kMinimal = R"({"kernel": {"family": "FBM", "params": {"kappa": 1.0}}, "u_ladder": [1]})";

}  // namespace

TEST_CASE("config parsing reports where it went wrong", "[harness]") {
  SECTION("defaults") {
    const auto c = parse_config(kMinimal);
    CHECK(c.process == ProcessKind::RISK_X);
    CHECK(c.estimator == Estimator::MEANSHIFT_IS);
    CHECK(c.n_points == 1025);
    CHECK(c.refine);
    CHECK(c.grid().t_end == 1.0);
  }
  SECTION("syntax errors carry line and column") {
    const auto what = domain_error("{\n  \"kernel\": {,\n}");
    CHECK_THAT(what, ContainsSubstring("cfg.json:2:14"));
  }
  SECTION("schema errors carry the field path") {
    CHECK_THAT(domain_error(R"({"kernel": {"family": "FBM", "params": {"kappa": "x"}}, "u_ladder": [1]})"),
               ContainsSubstring("'kernel.params.kappa'"));
    CHECK_THAT(domain_error(R"({"kernel": {"family": "FBM", "params": {"kappa": 1}}, "u_ladder": [1, "2"]})"),
               ContainsSubstring("'u_ladder[1]'"));
    CHECK_THAT(domain_error(R"({"kernel": {"family": "FBM", "params": {"kappa": 1}}, "u_ladder": [1],
                                "trend": {"d": 1, "gama": 2}})"),
               ContainsSubstring("'trend.gama'") && ContainsSubstring("allowed: d, gamma"));
    CHECK_THAT(domain_error(R"({"u_ladder": [1]})"), ContainsSubstring("'kernel': missing required field"));
  }
  SECTION("unknown families list the valid ones") {
    const auto what = domain_error(R"({"kernel": {"family": "BM", "params": {}}, "u_ladder": [1]})");
    for (const auto& name : family_names()) CHECK_THAT(what, ContainsSubstring(name));
  }
  SECTION("semantic checks") {
    CHECK_THAT(domain_error(R"({"kernel": {"family": "FBM", "params": {"kappa": 1}}, "u_ladder": [2, 1]})"),
               ContainsSubstring("increasing"));
    CHECK_THAT(
        domain_error(R"({"kernel": {"family": "FBM", "params": {"kappa": 1}}, "u_ladder": [1], "horizon": 2})"),
        ContainsSubstring("horizon must be 1"));
    CHECK_THAT(
        domain_error(R"({"kernel": {"family": "FBM", "params": {"kappa": 1}}, "u_ladder": [1], "n_points": 6})"),
        ContainsSubstring("even number"));
    CHECK_THAT(domain_error(R"({"kernel": {"family": "FBM", "params": {"kappa": 3}}, "u_ladder": [1]})"),
               ContainsSubstring("kappa"));
  }
  SECTION("configs round-trip through their JSON form") {
    auto c = brownian({0.5, 1.5}, 200, 3);
    c.trend = TrendSpec{0.5, 0.5};
    c.asymptotics.which = Case::II;
    c.asymptotics.epsilon = 0.1;
    const nlohmann::json j = c;
    const auto back = parse_config(j.dump());
    CHECK(back.kernel == c.kernel);
    CHECK(back.process == c.process);
    CHECK(back.u_ladder == c.u_ladder);
    CHECK(back.trend.d == 0.5);
    CHECK(back.seed == 3);
    CHECK(back.asymptotics.which == Case::II);
    CHECK(back.asymptotics.epsilon == 0.1);
  }
}

TEST_CASE("Wilson interval", "[harness]") {
  const auto oracle_wilson = [](double k, double n) {
    const double z = 1.959963984540054, p = k / n, z2 = z * z;
    const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
    const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
    return std::pair{centre - half, centre + half};
  };
  for (auto [k, n] : {std::pair{5L, 100L}, {0L, 50L}, {50L, 50L}, {1234L, 100000L}}) {
    const auto w = wilson_interval(k, n);
    const auto [lo, hi] = oracle_wilson(static_cast<double>(k), static_cast<double>(n));
    CHECK_THAT(w.lo, WithinAbs(lo, 1e-15));
    CHECK_THAT(w.hi, WithinAbs(hi, 1e-15));
  }
  CHECK(wilson_interval(0, 50).lo == 0.0);
}

TEST_CASE("degenerate levels and sojourn lengths", "[harness]") {
  for (auto est : {Estimator::CRUDE, Estimator::MEANSHIFT_IS}) {
    auto c = brownian({-1e6}, 300, 1);
    c.estimator = est;
    c.L = 0.5;
    CHECK(estimate_ruin(c).rows[0].estimate == 1.0);
    c.L = 1.0;  // needs more than the whole horizon
    const auto row = estimate_ruin(c).rows[0];
    CHECK(row.estimate == 0.0);
    CHECK(row.n_hits == 0);
    CHECK_THAT(row.ci95.hi, WithinRel(1 - std::pow(0.05, 1.0 / 300), 1e-12));
    CHECK(std::find(row.flags.begin(), row.flags.end(), "insufficient") != row.flags.end());
    CHECK(std::find(row.flags.begin(), row.flags.end(), "n_paths_below_1000") != row.flags.end());
  }
}

TEST_CASE("crude and importance sampling agree for Brownian motion", "[harness]") {
  auto c = brownian({2.0}, 20000, 11);
  c.refine = false;
  const auto crude = estimate_ruin_crude(c).rows[0];
  const auto is = estimate_ruin_is(c).rows[0];
  CHECK(std::abs(crude.estimate - is.estimate) <= 4 * std::hypot(crude.std_error, is.std_error));
  CHECK(is.std_error < crude.std_error);
  CHECK(is.mu > 0);
  CHECK(is.t_star == 1.0);
  // Discrete monitoring sits below the continuous value 2 Psi(2).
  CHECK(is.estimate < 2 * oracle::psi_series(2.0));
  CHECK(is.estimate > oracle::psi_series(2.0));
}

TEST_CASE("a zero shift gives unit weights", "[harness]") {
  auto c = brownian({0.5, 1.0, 1.5}, 2000, 4);
  c.is_shift_scale = 0;
  const auto is = estimate_ruin_is(c);
  const auto crude = estimate_ruin_crude(c);
  for (size_t k = 0; k < c.u_ladder.size(); ++k) {
    CHECK(is.rows[k].mu == 0.0);
    CHECK(is.rows[k].estimate == crude.rows[k].estimate);
    CHECK(is.rows[k].ess == static_cast<double>(crude.rows[k].n_hits));
  }
}

TEST_CASE("estimates are monotone in u, L, T and the trend", "[harness]") {
  auto c = brownian({-0.5, 0.0, 0.5, 1.0, 1.5}, 4000, 8);
  c.estimator = Estimator::CRUDE;
  c.L = 0.1;
  const auto base = estimate_ruin(c);
  for (size_t k = 1; k < base.rows.size(); ++k) CHECK(base.rows[k].estimate <= base.rows[k - 1].estimate);

  auto longer = c;
  longer.L = 0.3;
  const auto l_run = estimate_ruin(longer);
  for (size_t k = 0; k < base.rows.size(); ++k) CHECK(l_run.rows[k].estimate <= base.rows[k].estimate);

  auto steeper = c;
  steeper.trend = TrendSpec{1.0, 1.0};
  auto steeper2 = c;
  steeper2.trend = TrendSpec{2.0, 1.0};
  const auto d1 = estimate_ruin(steeper), d2 = estimate_ruin(steeper2);
  for (size_t k = 0; k < base.rows.size(); ++k) {
    CHECK(d1.rows[k].estimate <= base.rows[k].estimate);
    CHECK(d2.rows[k].estimate <= d1.rows[k].estimate);
  }
  CHECK(d2.rows[3].estimate < d1.rows[3].estimate);

  auto wide = c;
  wide.horizon = 3;
  wide.n_points = 385;
  const auto t_run = estimate_ruin(wide);
  for (size_t k = 0; k < base.rows.size(); ++k)
    CHECK(t_run.rows[k].estimate >= base.rows[k].estimate - 3 * std::hypot(t_run.rows[k].std_error,
                                                                            base.rows[k].std_error));
  CHECK(t_run.rows[3].estimate > base.rows[3].estimate);
}

TEST_CASE("confidence intervals overlap across seeded replications", "[harness]") {
  int overlaps = 0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    auto c = brownian({1.5}, 1500, 100 + r);
    c.n_points = 65;
    c.refine = false;
    c.L = 0.05;
    const auto crude = estimate_ruin_crude(c).rows[0];
    c.seed = 1000 + r;
    const auto is = estimate_ruin_is(c).rows[0];
    overlaps += crude.ci95.lo <= is.ci95.hi && is.ci95.lo <= crude.ci95.hi;
  }
  CHECK(overlaps >= 18);
}

TEST_CASE("runs are deterministic across thread counts", "[harness]") {
  ExperimentConfig c;
  c.kernel = KernelSpec::ex31(1.5);
  c.trend = TrendSpec{1.0, 0.5};
  c.u_ladder = {2.0, 2.5};
  c.L = 1.0;
  c.n_points = 129;
  c.n_paths = 3000;
  c.seed = 9;
  c.asymptotics.enabled = false;
  omp_set_num_threads(1);
  const auto one = estimate_ruin(c);
  omp_set_num_threads(3);
  const auto three = estimate_ruin(c);
  omp_set_num_threads(1);
  std::stringstream a, b;
  write_ruin_csv(one, a);
  write_ruin_csv(three, b);
  CHECK(a.str() == b.str());
  CHECK(one.rows[0].l_u == 1.0);  // no regime, no exponent
}

TEST_CASE("regime resolution and ratios", "[harness]") {
  ExperimentConfig c;
  c.kernel = KernelSpec::ex31(1.5);
  c.trend = TrendSpec{1.0, 1.0};
  c.u_ladder = {2.0};
  c.L = 1.0;
  std::vector<std::string> notes;
  const auto regime = resolve_regime(c, &notes);
  REQUIRE(regime);
  CHECK(regime->which == Case::III);
  CHECK(regime->lu_exponent == -2.0);
  REQUIRE(regime->c);
  CHECK(*regime->c > 0);

  c.asymptotics.c = 2.0;
  c.asymptotics.p = 0.0;
  c.asymptotics.lu_exponent = 0.0;
  const auto fixed = resolve_regime(c);
  REQUIRE(fixed);
  CHECK(*fixed->c == 2.0);

  auto raw = brownian({1.0}, 10, 1);
  raw.asymptotics.enabled = true;
  std::vector<std::string> raw_notes;
  CHECK_FALSE(resolve_regime(raw, &raw_notes));
  CHECK_FALSE(raw_notes.empty());
}

TEST_CASE("artifact formats", "[harness]") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(format_double(0.1) == "0.10000000000000001");

  auto c = brownian({1.0}, 50, 2);
  std::stringstream csv;
  write_ruin_csv(estimate_ruin(c), csv);
  std::string header;
  std::getline(csv, header);
  CHECK(header ==
        "u,L_u,estimate,std_error,ci95_low,ci95_high,n_hits,ess,t_star,mu,coarse,extrapolated,extrapolated_se,"
        "asymptotic,ratio,ratio_ci_low,ratio_ci_high,ratio_coarse,flags\r");
  std::string row;
  std::getline(csv, row);
  CHECK_THAT(row, ContainsSubstring("\"low_ess;n_paths_below_1000\"") ||
                      ContainsSubstring("n_paths_below_1000"));

  const nlohmann::json j = estimate_ruin(c);
  CHECK(j.at("rows").size() == 1);
  CHECK_FALSE(j.at("rows")[0].contains("runtime_seconds"));
}

TEST_CASE("run_config writes its artifacts", "[harness]") {
  const auto dir = scratch_dir("run");
  const auto cfg = dir / "cfg.json";
  std::ofstream(cfg) << R"({"name": "bm", "kernel": {"family": "FBM", "params": {"kappa": 1.0}},
    "process": "RAW", "u_ladder": [1, 2], "n_points": 65, "n_paths": 500, "seed": 5,
    "asymptotics": {"enabled": false}})";
  const auto art = run_config(cfg.string(), (dir / "out").string());
  CHECK(fs::path(art.directory) == dir / "out" / "bm");
  for (const char* f : {"report.json", "ruin.csv", "ratio.tsv"}) CHECK(fs::exists(dir / "out" / "bm" / f));
  const auto first = slurp(dir / "out" / "bm" / "ruin.csv");
  run_config(cfg.string(), (dir / "out").string());
  CHECK(slurp(dir / "out" / "bm" / "ruin.csv") == first);
  const auto report = nlohmann::json::parse(slurp(dir / "out" / "bm" / "report.json"));
  CHECK(report.at("config").at("seed") == 5);
  CHECK_THROWS_AS(run_config((dir / "missing.json").string()), DomainError);
}

TEST_CASE("command line smoke test", "[harness]") {
  const char* cli = std::getenv("LSGP_CLI");
  if (cli == nullptr) SKIP("LSGP_CLI not set");
  const auto dir = scratch_dir("cli");
  const auto cfg = dir / "cfg.json";
  std::ofstream(cfg) << R"({"name": "smoke", "kernel": {"family": "FBM", "params": {"kappa": 1.0}},
    "process": "RAW", "u_ladder": [1.5], "n_points": 65, "n_paths": 400, "seed": 1,
    "estimator": "CRUDE", "asymptotics": {"enabled": false}})";
  const auto run = [&](const std::string& args) {
    const std::string cmd = std::string(cli) + " " + args + " > " + (dir / "log.txt").string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  CHECK(run("--out-dir " + (dir / "a").string() + " ruin crude " + cfg.string()) == 0);
  CHECK(run("--threads 2 --out-dir " + (dir / "b").string() + " experiment run " + cfg.string()) == 0);
  CHECK(slurp(dir / "a" / "smoke" / "ruin.csv") == slurp(dir / "b" / "smoke" / "ruin.csv"));

  std::ofstream(dir / "bad.json") << R"({"kernel": {"family": "FBM", "params": {"kappa": 1.0}}, "u_ladder": [}")";
  CHECK(run("experiment run " + (dir / "bad.json").string()) == 2);
  CHECK_THAT(slurp(dir / "log.txt"), ContainsSubstring("bad.json:1:"));

  CHECK(run("--out-dir " + dir.string() + " asymptotics classify --kernel " +
            "'{\"family\":\"EX31\",\"params\":{\"alpha\":1.5}}' --d 1 --gamma 0.5 --L 1") == 0);
  CHECK(fs::exists(dir / "classify.json"));
}
