#include "lsgp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include <Eigen/Eigenvalues>

#include "lsgp/errors.hpp"
#include "lsgp/quadrature.hpp"
#include "lsgp/rng.hpp"

namespace lsgp {

namespace {

struct FamilyInfo {
  Family family;
  const char* name;
};

constexpr FamilyInfo kFamilies[] = {
    {Family::FBM, "FBM"},           {Family::EX31, "EX31"},
    {Family::SUBFBM, "SUBFBM"},     {Family::NEGSUBFBM, "NEGSUBFBM"},
    {Family::WEIGHTEDFBM, "WEIGHTEDFBM"}, {Family::INTFBM, "INTFBM"},
    {Family::TIMEAVGFBM, "TIMEAVGFBM"},   {Family::DUALFBM, "DUALFBM"},
};

std::vector<std::string> expected_params(Family f) {
  switch (f) {
    case Family::FBM:
      return {"kappa"};
    case Family::WEIGHTEDFBM:
      return {"a", "kappa"};
    default:
      return {"alpha"};
  }
}

void require_range(const KernelSpec& spec, const char* name, double lo, bool lo_open, double hi,
                   bool hi_open) {
  const double v = spec.param(name);
  const bool ok = std::isfinite(v) && (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
  if (!ok) {
    std::ostringstream os;
    os << to_string(spec.family) << ": parameter " << name << " = " << v << " outside "
       << (lo_open ? "(" : "[") << lo << ", " << hi << (hi_open ? ")" : "]");
    throw DomainError(os.str());
  }
}

// Integral of u^(a-1) (tau - u)^(kappa-1) over [0, m], tau >= m. For kappa < 1 the
// substitution w = (tau - u)^kappa turns the endpoint singularity at u = tau into the
// bounded integrand (tau - w^(1/kappa))^(a-1) / kappa.
template <typename Scalar>
Scalar weighted_piece(Scalar tau, Scalar m, Scalar a, Scalar kappa) {
  const Scalar rel_tol = std::is_same_v<Scalar, float> ? Scalar(1e-6) : Scalar(1e-13);
  if (m <= Scalar(0)) return Scalar(0);
  if (kappa < Scalar(1)) {
    const Scalar inv = Scalar(1) / kappa;
    auto g = [&](Scalar w) {
      const Scalar u = std::max(tau - std::pow(w, inv), Scalar(0));
      return std::pow(u, a - Scalar(1)) * inv;
    };
    const Scalar lo = std::pow(tau - m, kappa);
    const Scalar hi = std::pow(tau, kappa);
    return integrate_or_throw<Scalar>(g, lo, hi, rel_tol);
  }
  auto g = [&](Scalar u) {
    return std::pow(u, a - Scalar(1)) * std::pow(std::max(tau - u, Scalar(0)), kappa - Scalar(1));
  };
  return integrate_or_throw<Scalar>(g, Scalar(0), m, rel_tol);
}

template <typename Scalar>
Scalar int_fbm_cov(Scalar alpha, Scalar t, Scalar s) {
  using std::abs;
  using std::pow;
  const Scalar num = (alpha + 2) * (pow(s, alpha + 1) * t + s * pow(t, alpha + 1)) +
                     pow(abs(t - s), alpha + 2) - pow(t, alpha + 2) - pow(s, alpha + 2);
  return num / (2 * (alpha + 1));
}

}  // namespace

std::string_view to_string(Family f) {
  for (const auto& info : kFamilies)
    if (info.family == f) return info.name;
  return "UNKNOWN";
}

const std::vector<std::string>& family_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& info : kFamilies) v.emplace_back(info.name);
    return v;
  }();
  return names;
}

Family family_from_string(std::string_view name) {
  for (const auto& info : kFamilies)
    if (name == info.name) return info.family;
  std::string msg = "unknown kernel family '" + std::string(name) + "'; valid families:";
  for (const auto& n : family_names()) msg += " " + n;
  throw DomainError(msg);
}

double KernelSpec::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end())
    throw DomainError(std::string(to_string(family)) + ": missing parameter '" + name + "'");
  return it->second;
}

KernelSpec KernelSpec::fbm(double kappa) { return {Family::FBM, {{"kappa", kappa}}}; }
KernelSpec KernelSpec::ex31(double alpha) { return {Family::EX31, {{"alpha", alpha}}}; }
KernelSpec KernelSpec::sub_fbm(double alpha) { return {Family::SUBFBM, {{"alpha", alpha}}}; }
KernelSpec KernelSpec::neg_sub_fbm(double alpha) { return {Family::NEGSUBFBM, {{"alpha", alpha}}}; }
KernelSpec KernelSpec::weighted_fbm(double kappa, double a) {
  return {Family::WEIGHTEDFBM, {{"kappa", kappa}, {"a", a}}};
}
KernelSpec KernelSpec::integrated_fbm(double alpha) { return {Family::INTFBM, {{"alpha", alpha}}}; }
KernelSpec KernelSpec::time_average_fbm(double alpha) {
  return {Family::TIMEAVGFBM, {{"alpha", alpha}}};
}
KernelSpec KernelSpec::dual_fbm(double alpha) { return {Family::DUALFBM, {{"alpha", alpha}}}; }

void validate(const KernelSpec& spec) {
  const auto expected = expected_params(spec.family);
  for (const auto& [name, value] : spec.params) {
    if (std::find(expected.begin(), expected.end(), name) == expected.end())
      throw DomainError(std::string(to_string(spec.family)) + ": unknown parameter '" + name + "'");
  }
  switch (spec.family) {
    case Family::FBM:
      require_range(spec, "kappa", 0, true, 2, false);
      break;
    case Family::EX31:
      require_range(spec, "alpha", 1, true, 2, true);
      break;
    case Family::SUBFBM:
    case Family::INTFBM:
    case Family::DUALFBM:
      require_range(spec, "alpha", 0, true, 2, true);
      break;
    case Family::NEGSUBFBM:
      require_range(spec, "alpha", 2, true, 4, false);
      break;
    case Family::WEIGHTEDFBM:
      require_range(spec, "kappa", 0, true, 2, false);
      require_range(spec, "a", 1, true, HUGE_VAL, true);
      break;
    case Family::TIMEAVGFBM:
      require_range(spec, "alpha", 0, true, 2, false);
      break;
  }
}

Kernel::Kernel(const KernelSpec& spec) : spec_(spec) {
  validate(spec_);
  switch (spec_.family) {
    case Family::FBM:
      p_ = spec_.param("kappa");
      break;
    case Family::WEIGHTEDFBM:
      p_ = spec_.param("kappa");
      a_ = spec_.param("a");
      scale_ = std::exp(std::lgamma(a_ + p_) - std::lgamma(a_) - std::lgamma(p_)) / 2;
      break;
    case Family::SUBFBM:
      p_ = spec_.param("alpha");
      scale_ = 1 / (2 - std::pow(2.0, p_ - 1));
      break;
    case Family::NEGSUBFBM:
      p_ = spec_.param("alpha");
      scale_ = 1 / (std::pow(2.0, p_ - 1) - 2);
      break;
    case Family::EX31:
      p_ = spec_.param("alpha");
      scale_ = std::pow(2.0, -p_);
      break;
    default:
      p_ = spec_.param("alpha");
      break;
  }
}

template <typename Scalar>
Scalar Kernel::operator()(Scalar t, Scalar s) const {
  using std::abs;
  using std::pow;
  if (!(t >= Scalar(0)) || !(s >= Scalar(0)))
    throw DomainError("covariance: time arguments must be nonnegative");
  if (t == Scalar(0) || s == Scalar(0)) return Scalar(0);
  if (s < t) std::swap(t, s);  // exact symmetry
  const Scalar p = p_;
  const Scalar scale = scale_;
  switch (spec_.family) {
    case Family::FBM:
      return (pow(t, p) + pow(s, p) - pow(abs(t - s), p)) / 2;
    case Family::EX31:
      return (pow(t + s, p) - pow(abs(t - s), p)) * scale;
    case Family::SUBFBM:
      return (pow(t, p) + pow(s, p) - (pow(t + s, p) + pow(abs(t - s), p)) / 2) * scale;
    case Family::NEGSUBFBM:
      return ((pow(t + s, p) + pow(abs(t - s), p)) / 2 - pow(t, p) - pow(s, p)) * scale;
    case Family::WEIGHTEDFBM: {
      const Scalar a = a_;
      const Scalar m = std::min(t, s);
      return scale * (weighted_piece(t, m, a, p) + weighted_piece(s, m, a, p));
    }
    case Family::INTFBM:
      return int_fbm_cov<Scalar>(p, t, s);
    case Family::TIMEAVGFBM:
      return int_fbm_cov<Scalar>(p, t, s) / (t * s);
    case Family::DUALFBM:
      return (pow(t, p) * s + pow(s, p) * t) / (t + s);
  }
  return Scalar(0);
}

template float Kernel::operator()<float>(float, float) const;
template double Kernel::operator()<double>(double, double) const;
template long double Kernel::operator()<long double>(long double, long double) const;

double variogram(const KernelSpec& spec, double t, double s) {
  const Kernel k(spec);
  if (t == s) return 0.0;
  const double v = k(t, t) + k(s, s) - 2 * k(t, s);
  if (v >= 0) return v;
  if (v > -1e-12) return 0.0;
  throw NumericError("variogram: negative value beyond roundoff", v);
}

SelfSimilarMeta meta(const KernelSpec& spec) {
  validate(spec);
  SelfSimilarMeta m;
  switch (spec.family) {
    case Family::FBM: {
      const double k = spec.param("kappa");
      m = {k, k, 1.0, 1.0, k, false};
      break;
    }
    case Family::EX31: {
      const double a = spec.param("alpha");
      m = {a, a, std::pow(2.0, 1 - a), 1.0, a * std::pow(2.0, 2 - a), false};
      break;
    }
    case Family::SUBFBM: {
      const double a = spec.param("alpha");
      const double norm = 2 - std::pow(2.0, a - 1);
      m = {a, a, 1 / norm, a, std::pow(2.0, a - 1) / norm, false};
      break;
    }
    case Family::NEGSUBFBM: {
      const double a = spec.param("alpha");
      const double norm = std::pow(2.0, a - 1) - 2;
      m = {a, 2.0, a * (a - 1) * std::pow(2.0, a - 3) / norm, 2.0, a * (a - 1) / norm, false};
      break;
    }
    case Family::WEIGHTEDFBM: {
      const double k = spec.param("kappa");
      const double a = spec.param("a");
      const double c_y = std::exp(std::lgamma(a + k) - std::lgamma(a) - std::lgamma(k + 1));
      const double r = std::exp(std::lgamma(a + k) - std::lgamma(a + 1) - std::lgamma(k));
      m = {a + k - 1, k, c_y, a, r, false};
      break;
    }
    case Family::INTFBM: {
      const double a = spec.param("alpha");
      m = {a + 2, 2.0, a + 2, a <= 1 ? a + 1 : 2.0, 0.0, true};
      break;
    }
    case Family::TIMEAVGFBM: {
      const double a = spec.param("alpha");
      if (a > 1)
        m = {a, 2.0, 1.0, 1.0, a / 2 + 1, false};
      else if (a == 1)
        m = {a, 2.0, 1.0, 1.0, 2.0, false};
      else
        m = {a, 2.0, 1.0, a, 0.0, true};
      break;
    }
    case Family::DUALFBM: {
      const double a = spec.param("alpha");
      if (a > 1)
        m = {a, 2.0, a / 2, 1.0, 2.0, false};
      else if (a == 1)
        m = {a, 2.0, a / 2, 1.0, 3.0, false};
      else
        m = {a, 2.0, a / 2, a, 0.0, true};
      break;
    }
  }
  if (m.r_numeric) m.r = estimate_r_numeric(spec, m.beta);
  return m;
}

double estimate_r_numeric(const KernelSpec& spec, double beta) {
  const double xs[3] = {1e-3, 1e-4, 1e-5};
  double r[3];
  for (int i = 0; i < 3; ++i) r[i] = (1 - variogram(spec, xs[i], 1.0)) / std::pow(xs[i], beta);
  const double d1 = r[1] - r[0];
  const double d2 = r[2] - r[1];
  const double denom = d2 - d1;
  // Aitken needs a geometric decay of the differences; otherwise keep the finest rung.
  if (denom == 0 || std::abs(d2) >= std::abs(d1)) return r[2];
  return r[2] - d2 * d2 / denom;
}

namespace {

ValidationReport ladder_report(std::string condition, double tol, double target,
                               const std::vector<double>& ladder, auto&& ratio_at) {
  ValidationReport rep;
  rep.condition = std::move(condition);
  double previous = HUGE_VAL;
  for (double h : ladder) {
    LadderPoint p;
    p.h = h;
    p.value = ratio_at(h);
    p.target = target;
    p.violation = std::abs(p.value - target) / std::abs(target);
    if (p.violation > previous) rep.monotone = false;
    previous = p.violation;
    if (p.violation >= rep.worst_violation) {
      rep.worst_violation = p.violation;
      rep.worst_at = "h=" + std::to_string(h);
    }
    rep.ladder.push_back(p);
  }
  rep.passed = !rep.ladder.empty() && rep.ladder.back().violation <= tol;
  return rep;
}

}  // namespace

ValidationReport validate_s1(const KernelSpec& spec, double tol) {
  const auto m = meta(spec);
  ValidationReport rep;
  rep.condition = "S1";
  const double points[] = {0.1, 0.37, 1.0, 2.5, 7.3};
  const double scales[] = {0.5, 2.0, 3.7};
  const Kernel k(spec);
  for (double c : scales) {
    const double factor = std::pow(c, m.alpha);
    for (double t : points) {
      for (double s : points) {
        const double base = k(t, s);
        const double scaled = k(c * t, c * s);
        const double v = std::abs(scaled - factor * base) / std::abs(base);
        if (v > rep.worst_violation) {
          rep.worst_violation = v;
          std::ostringstream os;
          os << "t=" << t << " s=" << s << " c=" << c;
          rep.worst_at = os.str();
        }
      }
    }
  }
  const double diag = k(1.0, 1.0);
  rep.ladder.push_back({1.0, diag, 1.0, std::abs(diag - 1.0)});
  rep.passed = rep.worst_violation <= tol && std::abs(diag - 1.0) <= tol;
  return rep;
}

ValidationReport validate_psd(const KernelSpec& spec, double tol, int grids, int max_points, std::uint64_t seed) {
  if (grids < 1 || max_points < 2) throw DomainError("validate_psd needs grids >= 1 and max_points >= 2");
  const Kernel k(spec);
  ValidationReport rep;
  rep.condition = "PSD";
  double worst = -std::numeric_limits<double>::infinity();
  for (int g = 0; g < grids; ++g) {
    auto rng = substream(seed, kIndexStream, static_cast<std::uint64_t>(g));
    std::uniform_int_distribution<int> size(2, max_points);
    std::uniform_real_distribution<double> point(0.0, 10.0);
    std::vector<double> ts;
    const int n = size(rng);
    while (static_cast<int>(ts.size()) < n) {
      const double t = point(rng);
      if (t > 0 && std::find(ts.begin(), ts.end(), t) == ts.end()) ts.push_back(t);
    }
    std::sort(ts.begin(), ts.end());
    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) gram(i, j) = gram(j, i) = k(ts[i], ts[j]);
    const double trace = gram.trace();
    const double lambda = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues()(0);
    const double v = -lambda / trace;  // positive means a violation
    rep.ladder.push_back({static_cast<double>(n), lambda, -tol * trace, std::max(0.0, v)});
    if (v > worst) {
      worst = v;
      std::ostringstream os;
      os << "grid " << g << " (" << n << " points): min eigenvalue " << lambda << ", trace " << trace;
      rep.worst_at = os.str();
    }
  }
  rep.worst_violation = std::max(0.0, worst);
  rep.passed = worst <= tol;
  return rep;
}

ValidationReport validate_s2(const KernelSpec& spec, double tol, std::vector<double> ladder) {
  const auto m = meta(spec);
  return ladder_report("S2", tol, m.c_y, ladder, [&](double h) {
    return variogram(spec, 1 - h, 1.0) / std::pow(h, m.kappa);
  });
}

ValidationReport validate_cor23(const KernelSpec& spec, double tol, std::vector<double> ladder) {
  const auto m = meta(spec);
  if (m.r_numeric) {
    ValidationReport rep;
    rep.condition = "COR23";
    rep.skipped = true;
    rep.passed = true;
    rep.worst_at = "r known numerically only";
    return rep;
  }
  return ladder_report("COR23", tol, m.r, ladder, [&](double x) {
    return (1 - variogram(spec, x, 1.0)) / std::pow(x, m.beta);
  });
}

void to_json(nlohmann::json& j, const KernelSpec& spec) {
  j = nlohmann::json{{"family", std::string(to_string(spec.family))}, {"params", spec.params}};
}

void from_json(const nlohmann::json& j, KernelSpec& spec) {
  if (!j.is_object()) throw DomainError("kernel spec must be a JSON object");
  if (!j.contains("family") || !j.at("family").is_string())
    throw DomainError("kernel spec: field 'family' must be a string");
  spec.family = family_from_string(j.at("family").get<std::string>());
  spec.params.clear();
  if (j.contains("params")) {
    const auto& p = j.at("params");
    if (!p.is_object()) throw DomainError("kernel spec: field 'params' must be an object");
    for (const auto& [name, value] : p.items()) {
      if (!value.is_number())
        throw DomainError("kernel spec: params." + name + " must be a number");
      spec.params[name] = value.get<double>();
    }
  }
  validate(spec);
}

void to_json(nlohmann::json& j, const SelfSimilarMeta& m) {
  j = nlohmann::json{{"alpha", m.alpha}, {"kappa", m.kappa}, {"c_y", m.c_y},
                     {"beta", m.beta},   {"r", m.r},         {"r_numeric", m.r_numeric}};
}

void to_json(nlohmann::json& j, const ValidationReport& r) {
  nlohmann::json ladder = nlohmann::json::array();
  for (const auto& p : r.ladder)
    ladder.push_back({{"h", p.h}, {"value", p.value}, {"target", p.target}, {"violation", p.violation}});
  j = nlohmann::json{{"condition", r.condition},
                     {"passed", r.passed},
                     {"skipped", r.skipped},
                     {"monotone", r.monotone},
                     {"worst_violation", r.worst_violation},
                     {"worst_at", r.worst_at},
                     {"ladder", ladder}};
}

}  // namespace lsgp
