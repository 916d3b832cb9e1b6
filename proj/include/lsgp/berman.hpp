#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "lsgp/kernels.hpp"
#include "lsgp/sampler.hpp"
#include "lsgp/sojourn.hpp"

namespace lsgp {

/// coef * t^exponent
struct DriftTerm {
  double coef{0};
  double exponent{1};
  bool operator==(const DriftTerm&) const = default;
};

/// Drift h(t) as a finite sum of power terms; the empty sum is h = 0.
struct Drift {
  std::vector<DriftTerm> terms;

  static Drift zero() { return {}; }
  static Drift power(double coef, double exponent) { return Drift{{{coef, exponent}}}; }
  Drift& add(double coef, double exponent);

  double operator()(double t) const;
  /// All coefficients >= 0 and all exponents > 0.
  bool nondecreasing() const;
  /// Grows without bound.
  bool unbounded() const;

  bool operator==(const Drift&) const = default;
};

enum class BermanMethod {
  SHIFTED,  ///< cell-indexed change of measure, bounded per-path samples (default)
  CRUDE     ///< plain mean of exp(-y*)
};

struct BermanQuery {
  /// Process zeta; empty means zeta = 0.
  std::optional<KernelSpec> zeta;
  Drift drift;
  double x{0};
  /// Right end of E = [0, horizon]; +infinity truncates where the drift dominates.
  double horizon{1};
  WeightSpec weight;
  double delta{0.01};
  long n_paths{1000};
  std::uint64_t seed{0};
  /// Divide by the horizon.
  bool normalized{false};
  BermanMethod method{BermanMethod::SHIFTED};

  void validate() const;
};

struct BermanEstimate {
  double value{0};
  double std_error{0};
  double horizon{0};
  double delta{0};
  long n_paths{0};
  double x{0};
  bool normalized{false};
  bool extrapolated{false};
  /// Deterministic evaluation, no sampling error.
  bool exact{false};
  /// Pathwise bound on every sample (shifted method); +inf when unavailable.
  double upper_bound{0};
  std::string method;
};

/// y* = inf{y : eta{cells with f + y > 0} > x}. Cells are ranked by f; with W(k) the
/// weight of the top k cells and k* the smallest k with W(k) > x, y* = -f of the
/// k*-th ranked cell. Throws DomainError when x >= total weight.
double critical_level(const Eigen::Ref<const Eigen::VectorXd>& f, double x,
                      const Eigen::Ref<const Eigen::VectorXd>& weights);

/// Truncation point for an infinite horizon: h(T) >= 40 and, for nonzero zeta, the
/// standardized mean of f at T at least 9.
double truncation_horizon(const BermanQuery& q);

BermanEstimate estimate_berman(const BermanQuery& q);

/// A resolution of the sampled grid: every `stride`-th point, up to `horizon`
/// (0 means the full query horizon).
struct BermanLevel {
  int stride{1};
  double horizon{0};
};

/// Per-path samples for every (level, x) pair drawn from one set of paths.
struct BermanSamples {
  std::vector<BermanLevel> levels;
  std::vector<double> xs;
  /// n_paths x (levels * xs); column level * xs.size() + k.
  Eigen::MatrixXd samples;
  BermanQuery query;
  double upper_bound{0};
  double t_cut{0};

  int column(int level, int k) const { return level * static_cast<int>(xs.size()) + k; }
  BermanEstimate estimate(int level, int k) const;
  /// Mean and standard error of sum_l coef[l] * sample(level l, x k), paired per path.
  BermanEstimate combine(std::span<const double> coef, int k) const;
};

BermanSamples sample_berman(const BermanQuery& q, std::span<const double> xs,
                            std::span<const BermanLevel> levels);

/// Estimates at several x from common paths; exp(-y*) is nonincreasing in x path by path.
std::vector<BermanEstimate> estimate_berman_multi(const BermanQuery& q, std::span<const double> xs);

/// Two-point extrapolation in the grid spacing with error order `order`:
/// (B_f - r^p B_c) / (1 - r^p), r = delta_f / delta_c.
double richardson(double fine, double coarse, double ratio, double order);

/// Estimates at spacing delta and 2 delta on common paths, extrapolated with order
/// kappa / 2 where kappa is the local increment exponent of zeta.
std::vector<BermanEstimate> estimate_berman_extrapolated(const BermanQuery& q, std::span<const double> xs);

struct ScalingOptions {
  double horizon{25};
  double delta{0.01};
  long n_paths{100000};
  std::uint64_t seed{0};
  /// Run the fBm side on the time scale c^{1/kappa} t, which maps grid to grid.
  bool scaled_grid{true};
};

struct ScalingRow {
  double x{0};
  BermanEstimate lhs;  ///< B_Y(x)
  BermanEstimate rhs;  ///< c^{1/kappa} B_{B_kappa}(c^{1/kappa} x)
  double ratio{0};
  double combined_se{0};
  double z{0};
  bool agree{false};  ///< |lhs - rhs| <= 2 combined SE
};

struct ScalingReport {
  KernelSpec spec;
  double kappa{0};
  double c_y{0};
  ScalingOptions options;
  std::vector<ScalingRow> rows;
  bool all_agree() const;
};

/// Compares both sides of B_Y(x) = c^{1/kappa} B_{B_kappa}(c^{1/kappa} x) for a
/// family whose self-similarity and increment exponents coincide.
ScalingReport check_scaling_identity(const KernelSpec& spec, std::span<const double> xs,
                                     const ScalingOptions& options);

struct TableBudget {
  double horizon{50};
  double delta{0.01};
  long n_paths{20000};
  std::uint64_t seed{0};
  bool extrapolate{true};
};

struct BermanTableEntry {
  double kappa{0};
  double x{0};
  double value{0};
  double std_error{0};
  double horizon{0};
  double delta{0};
  long n_paths{0};
  bool extrapolated{false};
  bool monotone_flag{false};  ///< exceeds its left neighbour by more than 2 SE
};

/// Normalized fBm Berman constants B_{B_kappa}(x) on a grid of x.
struct BermanTable {
  std::vector<BermanTableEntry> entries;
  std::vector<std::string> warnings;
  TableBudget budget;

  std::vector<double> kappas() const;
  /// Entries of one kappa sorted by x; throws DomainError when absent.
  std::vector<BermanTableEntry> column(double kappa) const;
};

BermanTable build_berman_table(std::span<const double> kappas, std::span<const double> xs,
                               const TableBudget& budget);

/// CSV with header kappa,x,value,std_error,T,delta,n_paths,extrapolated.
void write_berman_table_csv(const BermanTable& table, std::ostream& os);
BermanTable read_berman_table_csv(std::istream& is);
/// Writes <path> and <path>.json (budget, warnings, monotonicity flags).
void save_berman_table(const BermanTable& table, const std::string& path);
BermanTable load_berman_table(const std::string& path);

void to_json(nlohmann::json& j, const Drift& d);
void from_json(const nlohmann::json& j, Drift& d);
void to_json(nlohmann::json& j, const BermanQuery& q);
void from_json(const nlohmann::json& j, BermanQuery& q);
void to_json(nlohmann::json& j, const BermanEstimate& e);
void to_json(nlohmann::json& j, const ScalingReport& r);

}  // namespace lsgp
