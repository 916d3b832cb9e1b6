#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "lsgp/berman.hpp"
#include "lsgp/errors.hpp"
#include "oracles.hpp"

using namespace lsgp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

BermanQuery fbm_query(double kappa, double horizon, long n_paths, std::uint64_t seed) {
  BermanQuery q;
  q.zeta = KernelSpec::fbm(kappa);
  q.horizon = horizon;
  q.delta = 0.01;
  q.n_paths = n_paths;
  q.seed = seed;
  q.normalized = true;
  return q;
}

}  // namespace

TEST_CASE("critical level examples", "[berman]") {
  const auto f = vec({-1, 0.5, -0.2});
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(3, 0.1);
  CHECK(critical_level(f, 0.0, w) == -0.5);
  CHECK_THAT(critical_level(f, 0.15, w), WithinAbs(0.2, 1e-15));
  CHECK(critical_level(Eigen::VectorXd::Zero(3), 0.15, w) == 0.0);
  CHECK_THROWS_AS(critical_level(f, 0.35, w), DomainError);
  CHECK_THROWS_AS(critical_level(f, -0.1, w), DomainError);
}

TEST_CASE("critical level agrees with a brute-force y scan", "[berman]") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0, 1);
  const double step = 1e-4;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 5 + static_cast<int>(unif(rng) * 30);
    std::vector<double> f(n);
    Eigen::VectorXd fv(n);
    for (int i = 0; i < n; ++i) fv(i) = f[i] = 0.8 * normal(rng);
    const double w = 0.1;
    const double x = unif(rng) * (n - 1) * w;
    const double y = critical_level(fv, x, Eigen::VectorXd::Constant(n, w));
    const double scanned = oracle::y_scan(f, x, w, -4, 4, step);
    INFO("trial " << trial);
    CHECK(scanned > y - 1e-12);
    CHECK(scanned <= y + step + 1e-9);
  }
}

TEST_CASE("zero process with increasing drift is exact", "[berman]") {
  BermanQuery q;
  q.drift = Drift::power(1.0, 1.0);
  q.x = 0.3;
  q.horizon = std::numeric_limits<double>::infinity();
  const auto e = estimate_berman(q);
  CHECK(e.exact);
  CHECK(e.std_error == 0);
  CHECK_THAT(e.value, WithinRel(std::exp(-0.3), 1e-12));

  q.weight = WeightSpec::power(0.5);
  // Power weight: eta([0, s]) = s^{1.5} / 1.5 = x.
  const double s = std::pow(1.5 * 0.3, 1 / 1.5);
  CHECK_THAT(estimate_berman(q).value, WithinRel(std::exp(-s), 1e-12));
}

TEST_CASE("degenerate kappa = 2 matches its finite-horizon closed form", "[berman]") {
  // sup_t (sqrt2 t Z - t^2) on [0, T]: E e^{sup} = 1 + T / sqrt(pi).
  const double T = 10;
  auto q = fbm_query(2.0, T, 20000, 4);
  const auto e = estimate_berman(q);
  const double exact = 1 / std::sqrt(M_PI) + 1 / T;
  CHECK(std::abs(e.value - exact) <= 4 * e.std_error + 2e-3);
  CHECK(e.value <= e.upper_bound);
}

TEST_CASE("estimator properties on common paths", "[berman]") {
  auto q = fbm_query(1.0, 10, 4000, 5);
  const std::vector<double> xs{0, 0.2, 0.5, 1.0, 2.0};
  const auto est = estimate_berman_multi(q, xs);
  for (size_t k = 0; k < xs.size(); ++k) {
    CHECK(est[k].value > 0);
    if (k > 0) CHECK(est[k].value <= est[k - 1].value);
  }
  const auto samples = sample_berman(q, xs, std::vector<BermanLevel>{{1, 0}});
  for (int k = 1; k < static_cast<int>(xs.size()); ++k)
    CHECK((samples.samples.col(samples.column(0, k)).array() <=
           samples.samples.col(samples.column(0, k - 1)).array())
              .all());
  CHECK((samples.samples.array() <= samples.upper_bound).all());
}

TEST_CASE("shifted and crude estimators agree", "[berman]") {
  auto q = fbm_query(1.0, 5, 20000, 6);
  const auto shifted = estimate_berman(q);
  q.method = BermanMethod::CRUDE;
  const auto crude = estimate_berman(q);
  const double se = std::hypot(shifted.std_error, crude.std_error);
  CHECK(std::abs(shifted.value - crude.value) <= 4 * se);
  CHECK(shifted.std_error < crude.std_error);
}

TEST_CASE("normalized estimates stabilize in T", "[berman]") {
  const auto a = estimate_berman(fbm_query(1.0, 10, 4000, 7));
  const auto b = estimate_berman(fbm_query(1.0, 20, 4000, 8));
  CHECK(b.value / a.value > 0.8);
  CHECK(b.value / a.value < 1.2);
}

TEST_CASE("Richardson extrapolation", "[berman]") {
  // B(delta) = B0 - c delta^p is removed exactly.
  const double p = 0.5, b0 = 1.0, c = 0.7;
  const double fine = b0 - c * std::pow(0.01, p), coarse = b0 - c * std::pow(0.02, p);
  CHECK_THAT(richardson(fine, coarse, 0.5, p), WithinRel(b0, 1e-12));
  const auto ext = estimate_berman_extrapolated(fbm_query(1.0, 5, 2000, 9), std::vector<double>{0.0});
  CHECK(ext.front().extrapolated);
}

TEST_CASE("infinite horizons are truncated where the drift dominates", "[berman]") {
  BermanQuery q;
  q.zeta = KernelSpec::fbm(1.0);
  q.drift = Drift::power(1.0, 1.0);
  q.horizon = std::numeric_limits<double>::infinity();
  const double t = truncation_horizon(q);
  CHECK(t >= 40);
  CHECK((t + t) / std::sqrt(2 * t) >= 9);  // (Var zeta + h) / (sqrt2 sigma)
  q.drift = Drift::zero();
  CHECK_THROWS_AS(truncation_horizon(q), DomainError);
}

TEST_CASE("queries validate", "[berman]") {
  auto q = fbm_query(1.0, 1, 10, 1);
  q.x = 1.0;
  CHECK_THROWS_AS(estimate_berman(q), DomainError);
  q.x = 0;
  q.delta = 2;
  CHECK_THROWS_AS(q.validate(), DomainError);
  CHECK_THROWS_AS(check_scaling_identity(KernelSpec::dual_fbm(1.5), std::vector<double>{0.0}, ScalingOptions{}),
                  DomainError);

  BermanQuery r;
  r.drift = Drift::power(2.0, 1.5).add(0.5, 0.5);
  r.horizon = std::numeric_limits<double>::infinity();
  const nlohmann::json j = r;
  const auto back = j.get<BermanQuery>();
  CHECK(back.drift == r.drift);
  CHECK(std::isinf(back.horizon));
  CHECK_FALSE(back.zeta.has_value());
}

TEST_CASE("scaling identity report", "[berman]") {
  ScalingOptions opt;
  opt.horizon = 4;
  opt.n_paths = 500;
  const auto rep = check_scaling_identity(KernelSpec::ex31(1.5), std::vector<double>{0.0, 0.5}, opt);
  REQUIRE(rep.rows.size() == 2);
  CHECK_THAT(rep.c_y, WithinRel(std::pow(2.0, -0.5), 1e-14));
  for (const auto& row : rep.rows) {
    CHECK(row.lhs.value > 0);
    CHECK(row.rhs.value > 0);
    CHECK(row.combined_se > 0);
  }
}

TEST_CASE("Berman table build and persistence", "[berman]") {
  TableBudget budget;
  budget.horizon = 5;
  budget.n_paths = 1000;
  budget.seed = 3;
  const std::vector<double> kappas{1.0, 2.0}, xs{0.0, 0.5, 1.0};
  const auto table = build_berman_table(kappas, xs, budget);
  REQUIRE(table.entries.size() == 6);
  for (double k : kappas) {
    const auto col = table.column(k);
    CHECK(col.front().value > 0);
    for (size_t i = 1; i < col.size(); ++i)
      CHECK(col[i].value <= col[i - 1].value + 2 * std::hypot(col[i].std_error, col[i - 1].std_error));
  }
  std::stringstream csv;
  write_berman_table_csv(table, csv);
  std::string header;
  std::getline(std::stringstream(csv.str()), header);
  CHECK(header == "kappa,x,value,std_error,T,delta,n_paths,extrapolated\r");
  const auto back = read_berman_table_csv(csv);
  REQUIRE(back.entries.size() == table.entries.size());
  for (size_t i = 0; i < back.entries.size(); ++i) CHECK(back.entries[i].value == table.entries[i].value);
  CHECK_THROWS_AS(table.column(1.5), DomainError);
  CHECK_THROWS_AS(build_berman_table(kappas, std::vector<double>{0.5, 1.0}, budget), DomainError);
}
