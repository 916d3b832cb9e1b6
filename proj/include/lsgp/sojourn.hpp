#pragma once

#include <cmath>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "lsgp/sampler.hpp"

namespace lsgp {

/// Premium d * t^gamma.
struct TrendSpec {
  double d{0};
  double gamma{1};

  void validate() const;
  double operator()(double t) const { return d == 0 ? 0.0 : d * std::pow(t, gamma); }
  /// Trend evaluated on every grid point.
  Eigen::VectorXd on(const GridSpec& grid) const;

  bool operator==(const TrendSpec&) const = default;
};

enum class WeightKind { LEBESGUE, POWER };

/// Measure used to weigh time: dt, or t^exponent dt.
struct WeightSpec {
  WeightKind kind{WeightKind::LEBESGUE};
  double exponent{0};

  static WeightSpec lebesgue() { return {}; }
  static WeightSpec power(double exponent) { return {WeightKind::POWER, exponent}; }

  void validate() const;
  /// Measure of [lo, hi].
  double mass(double lo, double hi) const;

  bool operator==(const WeightSpec&) const = default;
};

/// Mass of each of the n_points - 1 cells [t_j, t_{j+1}], integrated exactly.
Eigen::VectorXd cell_weights(const GridSpec& grid, const WeightSpec& weight);

/// Occupation measure sum_j w_j 1{path(t_j) - trend(t_j) > u} over the grid cells.
template <typename Derived>
double sojourn_measure(const Eigen::MatrixBase<Derived>& path, const Eigen::VectorXd& trend,
                       double u, const Eigen::VectorXd& weights) {
  double m = 0;
  for (Eigen::Index j = 0; j < weights.size(); ++j)
    if (path(j) - trend(j) > u) m += weights(j);
  return m;
}

struct SojournResult {
  Eigen::VectorXd measure;  ///< one entry per path
  double u{0};
  double total_mass{0};     ///< measure of the whole grid interval

  bool exceeds(Eigen::Index path, double L) const;
};

SojournResult sojourn_time(const PathBatch& batch, const TrendSpec& trend, double u,
                           const WeightSpec& weight = WeightSpec::lebesgue());

/// measure > L (strict).
bool exceedance_indicator(double measure, double L);

/// path_index,measure,exceed_L=<L>... (RFC-4180, CRLF line ends).
void write_sojourn_csv(const SojournResult& result, std::span<const double> L_values, std::ostream& os);

void to_json(nlohmann::json& j, const TrendSpec& t);
void from_json(const nlohmann::json& j, TrendSpec& t);
void to_json(nlohmann::json& j, const WeightSpec& w);
void from_json(const nlohmann::json& j, WeightSpec& w);

}  // namespace lsgp
