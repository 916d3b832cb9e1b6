#pragma once

// The pchip header calls isnan unqualified; <math.h> brings it into scope.
#include <math.h>

#include <boost/math/interpolators/pchip.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsgp/berman.hpp"
#include "lsgp/kernels.hpp"
#include "lsgp/sojourn.hpp"

namespace lsgp {

/// Standard normal survival function.
double psi(double u);

/// Parameters of the ruin asymptotics: Y in S(alpha, kappa, c_y), correlation scale
/// a, variance decay b t^beta, trend d t^gamma, sojourn level L.
struct RegimeInput {
  double alpha{1};
  double kappa{1};
  double c_y{1};
  double a{0.5};
  double b{0.5};
  double beta{1};
  double d{0};
  double gamma{1};
  double L{0};
  std::optional<double> epsilon;
  /// b came from a numerically fitted R.
  bool b_numeric{false};

  double beta_hat() const { return beta * kappa / alpha; }
  double gamma_hat() const { return gamma * kappa / alpha; }
  void validate() const;

  /// a = 1/2 and b = R/2 for X(t) = Y(1) - Y(t).
  static RegimeInput from_meta(const SelfSimilarMeta& m, const TrendSpec& trend, double L);
};

enum class Case { I, II, III };
const char* to_string(Case c);

struct Regime {
  Case which{Case::III};
  double p{0};
  double lu_exponent{0};  ///< L_u = L u^{lu_exponent}
  bool l_zero_allowed{false};
  double epsilon{0};      ///< case II only
  double epsilon_max{0};  ///< case II only
  std::optional<double> c;
  double c_error{0};
  std::string note;
};

/// Every applicable case. Cases I and II never coexist; II and III may.
std::vector<Regime> classify(const RegimeInput& in);

/// Regime whose L_u exponent matches, or nullopt ("uncovered").
std::optional<Regime> select_regime(const std::vector<Regime>& regimes, double lu_exponent, double tol = 1e-12);

/// Monotone interpolant of a Berman table column: PCHIP through a nonincreasing
/// (pool-adjacent-violators) fit, constant below the first x, exponential tail fitted
/// to the last three points above the last x (zero if the fit does not decay).
class BermanCurve {
 public:
  BermanCurve(std::vector<double> xs, std::vector<double> values);
  /// `se_shift` moves every value by that many standard errors (envelopes).
  static BermanCurve from_table(const BermanTable& table, double kappa, double se_shift = 0);

  double operator()(double x) const;
  double x_min() const { return xs_.front(); }
  double x_max() const { return xs_.back(); }
  double at_zero() const { return values_.front(); }

 private:
  using Pchip = boost::math::interpolators::pchip<std::vector<double>>;

  std::vector<double> xs_, values_;
  std::shared_ptr<const Pchip> spline_;  // four or more points; linear otherwise
  double tail_rate_{0};
  bool tail_zero_{false};
};

struct ConstantResult {
  double c{0};
  double error{0};
  double quadrature_error{0};
  double table_error{0};
};

/// Cases I and II: (a c_y)^{1/kappa} times the z-integral, computed in w with
/// z = w^{kappa/alpha}.
ConstantResult constant_case_i_ii(const RegimeInput& in, const Regime& regime, const BermanTable& table);
ConstantResult constant_case_i_ii(const RegimeInput& in, const Regime& regime, const BermanCurve& curve,
                                  const BermanCurve* lower = nullptr, const BermanCurve* upper = nullptr);

/// h(t) of case III.
Drift case_iii_drift(const RegimeInput& in);
/// Whether the case-III constant is the closed form exp(-h(L a^{1/kappa})).
bool case_iii_closed_form(const RegimeInput& in);

struct CaseIiiOptions {
  KernelSpec process;  ///< Y, used when the constant needs sampling
  double delta{0.01};
  long n_paths{20000};
  std::uint64_t seed{0};
};

/// The Berman query the case-III constant reduces to (zeta = Y or zeta = 0).
BermanQuery case_iii_query(const RegimeInput& in, const std::optional<KernelSpec>& process, double delta = 0.01,
                           long n_paths = 20000, std::uint64_t seed = 0);

/// exp(-h(L a^{1/kappa})) when alpha > min(beta, 2 gamma); otherwise estimates the
/// Berman constant of Y with drift h on [0, inf).
ConstantResult constant_case_iii(const RegimeInput& in, const std::optional<CaseIiiOptions>& sampling = {});

struct ExampleConstant {
  std::string example;
  RegimeInput input;
  Regime regime;
  std::optional<double> c;           ///< displayed closed form
  std::optional<BermanQuery> query;  ///< when the constant is a Berman constant of Y
  bool needs_table{false};           ///< integral against B_{B_kappa}
  std::string note;
};

/// Closed forms and reductions of the worked examples. Ids: "3.1" (EX31), "3.2"
/// (SUBFBM), "3.3" (NEGSUBFBM), "3.4" (WEIGHTEDFBM), "3.5" (INTFBM), "3.6"
/// (TIMEAVGFBM), "3.7" (DUALFBM). Each uses gamma = beta / 2.
ExampleConstant example_constant(const std::string& id, const KernelSpec& spec, double L, double d,
                                 std::optional<double> epsilon = {});
/// Example id matching a kernel family.
std::string example_for(Family f);

struct Approximation {
  double value{0};
  double l_u{0};
};

/// c u^p Psi(u) with L_u = L u^{lu_exponent}.
Approximation approximate_probability(const RegimeInput& in, const Regime& regime, double u);

void to_json(nlohmann::json& j, const RegimeInput& in);
void from_json(const nlohmann::json& j, RegimeInput& in);
void to_json(nlohmann::json& j, const Regime& r);
void to_json(nlohmann::json& j, const ExampleConstant& e);

}  // namespace lsgp
