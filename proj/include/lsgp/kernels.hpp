#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace lsgp {

/// Covariance families of self-similar Gaussian processes Y with Var Y(1) = 1.
enum class Family { FBM, EX31, SUBFBM, NEGSUBFBM, WEIGHTEDFBM, INTFBM, TIMEAVGFBM, DUALFBM };

std::string_view to_string(Family f);
/// Throws DomainError naming every valid family when `name` is unknown.
Family family_from_string(std::string_view name);
const std::vector<std::string>& family_names();

/// A covariance family together with its named parameters. FBM takes "kappa",
/// WEIGHTEDFBM takes "kappa" and "a", every other family takes "alpha".
struct KernelSpec {
  Family family{Family::FBM};
  std::map<std::string, double> params;

  double param(const std::string& name) const;

  static KernelSpec fbm(double kappa);
  static KernelSpec ex31(double alpha);
  static KernelSpec sub_fbm(double alpha);
  static KernelSpec neg_sub_fbm(double alpha);
  static KernelSpec weighted_fbm(double kappa, double a);
  static KernelSpec integrated_fbm(double alpha);
  static KernelSpec time_average_fbm(double alpha);
  static KernelSpec dual_fbm(double alpha);

  bool operator==(const KernelSpec&) const = default;
};

/// Throws DomainError when a parameter is missing, unknown or out of range.
void validate(const KernelSpec& spec);

/// Self-similarity metadata: Y(ct) =d c^{alpha/2} Y(t), V_Y(1-h) ~ c_y |h|^kappa and
/// 1 - V_Y(x) ~ r x^beta at 0.
struct SelfSimilarMeta {
  double alpha{0};
  double kappa{0};
  double c_y{0};
  double beta{0};
  double r{0};
  /// r has no closed form for this family/parameter and was fitted numerically.
  bool r_numeric{false};

  /// Conditions under which X(t) = Y(1) - Y(t) inherits the ruin asymptotics.
  bool corollary_applicable() const { return beta >= 1 && beta > alpha / 2; }
};

/// Validated covariance evaluator with parameters resolved once, for hot loops.
class Kernel {
 public:
  explicit Kernel(const KernelSpec& spec);

  const KernelSpec& spec() const { return spec_; }

  /// R_Y(t, s). Every family vanishes at the origin, so R(0, s) = 0.
  template <typename Scalar>
  Scalar operator()(Scalar t, Scalar s) const;

 private:
  KernelSpec spec_;
  double p_ = 0;  // kappa for FBM/WEIGHTEDFBM, alpha otherwise
  double a_ = 0;  // WEIGHTEDFBM weight exponent
  double scale_ = 1;
};

/// R_Y(t, s). Every family vanishes at the origin, so R(0, s) = 0.
template <typename Scalar>
Scalar covariance(const KernelSpec& spec, Scalar t, Scalar s) {
  return Kernel(spec)(t, s);
}

inline double covariance(const KernelSpec& spec, double t, double s) {
  return Kernel(spec)(t, s);
}

/// Var(Y(t) - Y(s)). Roundoff negatives down to -1e-12 are clamped to zero; anything
/// more negative is reported as a NumericError.
double variogram(const KernelSpec& spec, double t, double s);

SelfSimilarMeta meta(const KernelSpec& spec);

/// Fits R in (1 - V(x, 1)) / x^beta -> R on the ladder x = 1e-3, 1e-4, 1e-5 with an
/// Aitken extrapolation of the leading power correction.
double estimate_r_numeric(const KernelSpec& spec, double beta);

struct LadderPoint {
  double h{0};
  double value{0};
  double target{0};
  double violation{0};  ///< relative deviation |value - target| / |target|
};

/// Outcome of a structural check. Violations are data, not exceptions.
struct ValidationReport {
  std::string condition;
  bool passed{false};
  bool skipped{false};
  bool monotone{true};  ///< violations shrink along the ladder
  double worst_violation{0};
  std::string worst_at;
  std::vector<LadderPoint> ladder;
};

/// |R(ct, cs) - c^alpha R(t, s)| <= tol |R(t, s)| over a fixed (t, s, c) lattice.
ValidationReport validate_s1(const KernelSpec& spec, double tol);
/// V(1 - h, 1) / h^kappa against c_y; the finest rung decides the verdict.
ValidationReport validate_s2(const KernelSpec& spec, double tol,
                             std::vector<double> ladder = {1e-2, 1e-3, 1e-4});
/// (1 - V(x, 1)) / x^beta against r; skipped when r is only known numerically.
ValidationReport validate_cor23(const KernelSpec& spec, double tol,
                                std::vector<double> ladder = {1e-2, 1e-3, 1e-4});

/// Minimum Gram eigenvalue >= -tol * trace on `grids` random grids of at most
/// `max_points` distinct points in (0, 10].
ValidationReport validate_psd(const KernelSpec& spec, double tol = 1e-8, int grids = 20, int max_points = 64,
                              std::uint64_t seed = 0);

void to_json(nlohmann::json& j, const KernelSpec& spec);
void from_json(const nlohmann::json& j, KernelSpec& spec);
void to_json(nlohmann::json& j, const SelfSimilarMeta& m);
void to_json(nlohmann::json& j, const ValidationReport& r);

}  // namespace lsgp
