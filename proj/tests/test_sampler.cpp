#include <catch_amalgamated.hpp>

#include <omp.h>

#include <cmath>
#include <sstream>

#include "lsgp/errors.hpp"
#include "lsgp/sampler.hpp"
#include "oracles.hpp"

using namespace lsgp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::VectorXd column(const PathBatch& b, int i) { return b.values.col(i); }

double sample_cov(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return ((a.array() - a.mean()) * (b.array() - b.mean())).sum() / static_cast<double>(a.size() - 1);
}

}  // namespace

TEST_CASE("build_gram assembles the covariance", "[sampler]") {
  const double bm_pts[] = {0.5, 1.0};
  const auto bm = build_gram(KernelSpec::fbm(1.0), bm_pts);
  CHECK_THAT(bm(0, 0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(bm(0, 1), WithinAbs(0.5, 1e-15));
  CHECK_THAT(bm(1, 0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(bm(1, 1), WithinAbs(1.0, 1e-15));

  const double dual_pts[] = {1.0, 2.0};
  const auto dual = build_gram(KernelSpec::dual_fbm(1.5), dual_pts);
  const double r12 = (1 * 2 + std::pow(2.0, 1.5) * 1) / 3;
  CHECK_THAT(dual(0, 0), WithinRel(1.0, 1e-14));
  CHECK_THAT(dual(0, 1), WithinRel(r12, 1e-14));
  CHECK_THAT(dual(1, 1), WithinRel(std::pow(2.0, 1.5), 1e-14));

  const double dup[] = {1.0, 1.0};
  CHECK_THROWS_AS(build_gram(KernelSpec::ex31(1.5), dup), DomainError);
}

TEST_CASE("factorize produces a root and escalates jitter", "[sampler]") {
  SECTION("identity") {
    const auto f = factorize(Eigen::MatrixXd::Identity(2, 2));
    CHECK(f.jitter_used == 0);
    CHECK(f.root.isApprox(Eigen::MatrixXd::Identity(2, 2)));
  }
  SECTION("Brownian Gram by hand") {
    Eigen::MatrixXd g(2, 2);
    g << 0.5, 0.5, 0.5, 1.0;
    const auto f = factorize(g);
    const double r = std::sqrt(0.5);
    CHECK_THAT(f.root(0, 0), WithinAbs(r, 1e-15));
    CHECK_THAT(f.root(1, 0), WithinAbs(r, 1e-15));
    CHECK_THAT(f.root(1, 1), WithinAbs(r, 1e-15));
    CHECK(f.root(0, 1) == 0);
  }
  SECTION("rank deficient needs jitter") {
    Eigen::MatrixXd g(2, 2);
    g << 1, 1, 1, 1;
    const auto f = factorize(g);
    CHECK(f.jitter_used > 0);
    CHECK(f.jitter_used <= 1e-6 * g.trace() / 2);
  }
  SECTION("indefinite matrices are rejected") {
    Eigen::MatrixXd g(2, 2);
    g << 1, 2, 2, 1;
    CHECK_THROWS_AS(factorize(g), NumericError);
  }
  SECTION("reconstruction tolerance on a fine grid") {
    const GridSpec grid{0, 1, 201};
    const auto g = build_gram(KernelSpec::ex31(1.5), grid);
    const auto f = factorize(g, grid);
    const double tol = f.jitter_used + 1e-10 * g.trace();
    CHECK((f.reconstructed() - g).cwiseAbs().maxCoeff() <= tol);
    CHECK(f.active.front() == 1);  // t = 0 is pinned
  }
}

TEST_CASE("dense draws reproduce Brownian moments", "[sampler]") {
  const GridSpec grid{0, 1, 11};
  const long n = 100000;
  const auto b = draw(factorize(build_gram(KernelSpec::fbm(1.0), grid), grid), n, 17);
  CHECK((b.values.col(0).array() == 0).all());
  const auto t1 = column(b, 10), th = column(b, 5);
  CHECK_THAT(sample_cov(t1, t1), WithinAbs(1.0, 0.02));
  CHECK_THAT(sample_cov(th, t1), WithinAbs(0.5, 0.02));
  const double band = 4 * std::sqrt(2.0 / n);
  for (int i = 1; i < grid.n_points; ++i) {
    const double truth = grid.point(i);
    CHECK(std::abs(sample_cov(column(b, i), column(b, i)) - truth) <= band * truth);
  }
}

TEST_CASE("draws are reproducible and independent of the worker count", "[sampler]") {
  const GridSpec grid{0, 2, 33};
  const auto gen = make_dense_generator(factorize(build_gram(KernelSpec::sub_fbm(1.2), grid), grid));
  omp_set_num_threads(1);
  const auto one = draw(*gen, 100, 5);
  omp_set_num_threads(3);
  const auto three = draw(*gen, 100, 5);
  omp_set_num_threads(1);
  const auto again = draw(*gen, 100, 5);
  CHECK(one.values == three.values);
  CHECK(one.values == again.values);
  const auto prefix = draw(*gen, 40, 5);
  CHECK(prefix.values == one.values.topRows(40));
  const auto other = draw(*gen, 100, 6);
  CHECK(other.values != one.values);
}

TEST_CASE("risk process X(t) = Y(1) - Y(t)", "[sampler]") {
  SECTION("vanishes at t = 1 and has unit variance at 0 for Brownian Y") {
    const auto b = draw_risk_x(KernelSpec::fbm(1.0), GridSpec{0, 1, 21}, 100000, 3);
    CHECK(b.construction == Construction::RISK_X);
    CHECK((b.values.col(20).array() == 0).all());
    const auto x0 = column(b, 0);
    CHECK_THAT(sample_cov(x0, x0), WithinAbs(1.0, 0.02));
  }
  SECTION("EX31 local variance near t = 1") {
    const auto b = draw_risk_x(KernelSpec::ex31(1.5), GridSpec{0, 1, 101}, 100000, 4);
    const auto x = column(b, 99);  // t = 0.99
    CHECK_THAT(sample_cov(x, x) / std::pow(0.01, 1.5), WithinRel(std::pow(2.0, -0.5), 0.05));
  }
  SECTION("grids outside [0, 1] are rejected") {
    CHECK_THROWS_AS(draw_risk_x(KernelSpec::fbm(1.0), GridSpec{0, 2, 5}, 10, 1), DomainError);
  }
  SECTION("generator covariance equals the variogram") {
    const GridSpec grid{0, 1, 9};
    const auto spec = KernelSpec::dual_fbm(1.5);
    const auto gen = make_risk_x_generator(spec, grid);
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j) {
        const double t = grid.point(i), s = grid.point(j);
        const double ref = oracle::dual_fbm(1.5, 1, 1) - (t > 0 ? oracle::dual_fbm(1.5, t, 1) : 0) -
                           (s > 0 ? oracle::dual_fbm(1.5, 1, s) : 0) +
                           (t > 0 && s > 0 ? oracle::dual_fbm(1.5, t, s) : 0);
        CHECK_THAT(gen->covariance(i, j), WithinAbs(ref, 1e-12));
      }
  }
}

TEST_CASE("fast fBm path", "[sampler]") {
  SECTION("Brownian increments are iid with variance equal to the spacing") {
    const GridSpec grid{0, 1, 65};
    const auto b = draw_fbm_fast(1.0, grid, 20000, 8);
    CHECK(b.construction == Construction::FBM_FAST);
    const double h = grid.spacing();
    const Eigen::VectorXd inc1 = b.values.col(10) - b.values.col(9);
    const Eigen::VectorXd inc2 = b.values.col(11) - b.values.col(10);
    CHECK_THAT(sample_cov(inc1, inc1), WithinRel(h, 4 * std::sqrt(2.0 / 20000)));
    CHECK(std::abs(sample_cov(inc1, inc2)) < 4 * h / std::sqrt(20000.0));
  }
  SECTION("covariance is exact") {
    const GridSpec grid{0, 3, 50};
    const auto gen = make_fbm_fast_generator(1.5, grid);
    for (int i = 0; i < 50; i += 7)
      for (int j = 0; j < 50; j += 5)
        CHECK_THAT(gen->covariance(i, j), WithinAbs(oracle::fbm(1.5, grid.point(i), grid.point(j)), 1e-12));
  }
  SECTION("marginal at t = 1 matches the dense sampler (KS)") {
    const GridSpec grid{0, 1, 129};
    const long n = 10000;
    const auto fast = draw_fbm_fast(1.5, grid, n, 21);
    const auto dense = draw(factorize(build_gram(KernelSpec::fbm(1.5), grid), grid), n, 22);
    std::vector<double> a(n), b(n);
    for (long p = 0; p < n; ++p) {
      a[p] = fast.values(p, 128);
      b[p] = dense.values(p, 128);
    }
    CHECK(oracle::ks_p_value(oracle::ks_statistic(a, b), n, n) > 1e-3);
  }
  SECTION("seeded determinism") {
    const GridSpec grid{0, 1, 100};
    CHECK(draw_fbm_fast(0.6, grid, 50, 9).values == draw_fbm_fast(0.6, grid, 50, 9).values);
  }
}

TEST_CASE("path batches round-trip through the binary format and export CSV", "[sampler]") {
  const auto b = draw_fbm_fast(1.2, GridSpec{0, 1, 5}, 3, 2);
  std::stringstream bin;
  write_binary(b, bin);
  const auto back = read_binary(bin);
  CHECK(back.grid == b.grid);
  CHECK(back.seed == b.seed);
  CHECK(back.construction == b.construction);
  CHECK(back.values == b.values);

  std::stringstream csv;
  write_csv(b, csv);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "path_index,t=0,t=0.25,t=0.5,t=0.75,t=1\r");
}

TEST_CASE("grid specs are validated", "[sampler]") {
  CHECK_THROWS_AS((GridSpec{1, 0.5, 3}.validate()), DomainError);
  CHECK_THROWS_AS((GridSpec{0, 1, 1}.validate()), DomainError);
  CHECK_THROWS_AS((GridSpec{-1, 1, 3}.validate()), DomainError);
  const auto g = grid_with_spacing(0, 1, 0.01);
  CHECK(g.n_points == 101);
  CHECK(g.point(100) == 1.0);
}
