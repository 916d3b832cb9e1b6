#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <sstream>

#include "lsgp/errors.hpp"
#include "lsgp/sojourn.hpp"

using namespace lsgp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

PathBatch constant_batch(const GridSpec& grid, const std::vector<std::function<double(double)>>& fs) {
  PathBatch b;
  b.grid = grid;
  b.values.resize(static_cast<Eigen::Index>(fs.size()), grid.n_points);
  for (size_t p = 0; p < fs.size(); ++p)
    for (int i = 0; i < grid.n_points; ++i) b.values(static_cast<Eigen::Index>(p), i) = fs[p](grid.point(i));
  return b;
}

}  // namespace

TEST_CASE("occupation measure of simple paths", "[sojourn]") {
  const GridSpec grid{0, 1, 101};
  const double cell = grid.spacing();
  const auto b = constant_batch(grid, {[](double) { return 1.0; }, [](double t) { return t >= 0.5 ? 1.0 : -1.0; },
                                       [](double) { return -1.0; }});
  const auto r = sojourn_time(b, TrendSpec{}, 0.0);
  CHECK_THAT(r.measure(0), WithinAbs(1.0, 1e-12));
  CHECK_THAT(r.measure(1), WithinAbs(0.5, cell + 1e-12));
  CHECK(r.measure(2) == 0.0);
  CHECK_THAT(r.total_mass, WithinAbs(1.0, 1e-15));
}

TEST_CASE("power weights integrate exactly over cells", "[sojourn]") {
  const double alpha = 1.5, kappa = 0.5;
  const double e = kappa / alpha - 1;
  const GridSpec grid{0, 2, 201};
  const auto w = cell_weights(grid, WeightSpec::power(e));
  CHECK_THAT(w.sum(), WithinRel(std::pow(2.0, kappa / alpha) * alpha / kappa, 1e-12));

  const double t1 = 0.3, t2 = 1.4;
  const auto b = constant_batch(grid, {[&](double t) { return t >= t1 && t < t2 ? 1.0 : 0.0; }});
  const auto r = sojourn_time(b, TrendSpec{}, 0.5, WeightSpec::power(e));
  const double exact = (std::pow(t2, kappa / alpha) - std::pow(t1, kappa / alpha)) * alpha / kappa;
  const double one_cell = w.maxCoeff();
  CHECK_THAT(r.measure(0), WithinAbs(exact, one_cell));
}

TEST_CASE("trend is subtracted before thresholding", "[sojourn]") {
  const GridSpec grid{0, 1, 11};
  const auto b = constant_batch(grid, {[](double) { return 1.0; }});
  // 1 - 2 t > 0 on [0, 0.5): five left endpoints 0, 0.1, ..., 0.4.
  const auto r = sojourn_time(b, TrendSpec{2.0, 1.0}, 0.0);
  CHECK_THAT(r.measure(0), WithinAbs(0.5, 1e-12));
}

TEST_CASE("exceedance indicator is strict", "[sojourn]") {
  CHECK(exceedance_indicator(0.3, 0.2));
  CHECK_FALSE(exceedance_indicator(0.0, 0.0));
  CHECK_FALSE(exceedance_indicator(1.0, 1.0));
  CHECK_THROWS_AS(exceedance_indicator(0.5, -0.1), DomainError);
}

TEST_CASE("monotone in u and L, and L = 0 means a grid point above u", "[sojourn]") {
  const GridSpec grid{0, 1, 65};
  const auto batch = draw_fbm_fast(1.0, grid, 500, 12);
  const Eigen::VectorXd trend = TrendSpec{0.5, 0.5}.on(grid);
  Eigen::VectorXd prev;
  for (double u : {-0.5, 0.0, 0.5, 1.0, 1.5}) {
    const auto r = sojourn_time(batch, TrendSpec{0.5, 0.5}, u);
    if (prev.size() > 0) CHECK((r.measure.array() <= prev.array()).all());
    prev = r.measure;
    for (Eigen::Index p = 0; p < batch.values.rows(); ++p) {
      bool any = false;
      for (int j = 0; j + 1 < grid.n_points; ++j) any = any || batch.values(p, j) - trend(j) > u;
      CHECK(r.exceeds(p, 0.0) == any);
    }
    double last = 1.0;
    for (double L : {0.0, 0.1, 0.3, 0.6}) {
      double rate = 0;
      for (Eigen::Index p = 0; p < r.measure.size(); ++p) rate += r.exceeds(p, L);
      rate /= static_cast<double>(r.measure.size());
      CHECK(rate <= last);
      last = rate;
    }
  }
}

TEST_CASE("CSV export", "[sojourn]") {
  const GridSpec grid{0, 1, 3};
  const auto b = constant_batch(grid, {[](double) { return 1.0; }, [](double) { return -1.0; }});
  const auto r = sojourn_time(b, TrendSpec{}, 0.0);
  std::stringstream os;
  const double Ls[] = {0.0, 0.5};
  write_sojourn_csv(r, Ls, os);
  CHECK(os.str() == "path_index,measure,\"exceed_L=0\",\"exceed_L=0.5\"\r\n0,1,1,1\r\n1,0,0,0\r\n");
}

TEST_CASE("specs validate", "[sojourn]") {
  CHECK_THROWS_AS((TrendSpec{-1, 1}.validate()), DomainError);
  CHECK_THROWS_AS((TrendSpec{1, 0}.validate()), DomainError);
  CHECK_THROWS_AS(WeightSpec::power(-1).validate(), DomainError);
  const nlohmann::json j = WeightSpec::power(-0.5);
  CHECK(j.get<WeightSpec>() == WeightSpec::power(-0.5));
}
