#include "lsgp/sojourn.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "lsgp/errors.hpp"

namespace lsgp {

void TrendSpec::validate() const {
  if (!(d >= 0) || !std::isfinite(d)) throw DomainError("trend: d must be finite and >= 0");
  if (!(gamma > 0) || !std::isfinite(gamma)) throw DomainError("trend: gamma must be > 0");
}

Eigen::VectorXd TrendSpec::on(const GridSpec& grid) const {
  Eigen::VectorXd v(grid.n_points);
  for (int i = 0; i < grid.n_points; ++i) v(i) = (*this)(grid.point(i));
  return v;
}

void WeightSpec::validate() const {
  if (kind == WeightKind::POWER && !(exponent > -1 && std::isfinite(exponent)))
    throw DomainError("weight: POWER exponent must be > -1");
}

double WeightSpec::mass(double lo, double hi) const {
  if (kind == WeightKind::LEBESGUE) return hi - lo;
  const double e1 = exponent + 1;
  return (std::pow(hi, e1) - std::pow(lo, e1)) / e1;
}

Eigen::VectorXd cell_weights(const GridSpec& grid, const WeightSpec& weight) {
  grid.validate();
  weight.validate();
  Eigen::VectorXd w(grid.n_points - 1);
  for (int j = 0; j + 1 < grid.n_points; ++j) w(j) = weight.mass(grid.point(j), grid.point(j + 1));
  return w;
}

bool SojournResult::exceeds(Eigen::Index path, double L) const {
  return exceedance_indicator(measure(path), L);
}

SojournResult sojourn_time(const PathBatch& batch, const TrendSpec& trend, double u,
                           const WeightSpec& weight) {
  trend.validate();
  if (!std::isfinite(u)) throw DomainError("sojourn_time: u must be finite");
  const Eigen::VectorXd w = cell_weights(batch.grid, weight);
  const Eigen::VectorXd c = trend.on(batch.grid);
  SojournResult r;
  r.u = u;
  r.total_mass = weight.mass(batch.grid.t_start, batch.grid.t_end);
  r.measure.resize(batch.values.rows());
  for (Eigen::Index p = 0; p < batch.values.rows(); ++p)
    r.measure(p) = sojourn_measure(batch.values.row(p).transpose(), c, u, w);
  return r;
}

bool exceedance_indicator(double measure, double L) {
  if (!(L >= 0)) throw DomainError("exceedance_indicator: L must be >= 0");
  return measure > L;
}

void write_sojourn_csv(const SojournResult& result, std::span<const double> L_values, std::ostream& os) {
  char buf[64];
  os << "path_index,measure";
  for (double L : L_values) {
    std::snprintf(buf, sizeof buf, ",\"exceed_L=%.17g\"", L);
    os << buf;
  }
  os << "\r\n";
  for (Eigen::Index p = 0; p < result.measure.size(); ++p) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g", static_cast<long>(p), result.measure(p));
    os << buf;
    for (double L : L_values) os << ',' << (result.exceeds(p, L) ? 1 : 0);
    os << "\r\n";
  }
}

void to_json(nlohmann::json& j, const TrendSpec& t) { j = {{"d", t.d}, {"gamma", t.gamma}}; }

void from_json(const nlohmann::json& j, TrendSpec& t) {
  t.d = j.value("d", 0.0);
  t.gamma = j.value("gamma", 1.0);
  t.validate();
}

void to_json(nlohmann::json& j, const WeightSpec& w) {
  j = {{"kind", w.kind == WeightKind::LEBESGUE ? "LEBESGUE" : "POWER"}, {"exponent", w.exponent}};
}

void from_json(const nlohmann::json& j, WeightSpec& w) {
  const auto kind = j.value("kind", std::string("LEBESGUE"));
  if (kind == "LEBESGUE")
    w = WeightSpec::lebesgue();
  else if (kind == "POWER")
    w = WeightSpec::power(j.at("exponent").get<double>());
  else
    throw DomainError("weight kind must be LEBESGUE or POWER, got " + kind);
  w.validate();
}

}  // namespace lsgp
