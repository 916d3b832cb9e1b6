#include "lsgp/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lsgp/errors.hpp"
#include "lsgp/quadrature.hpp"

namespace lsgp {

namespace {

bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); }
bool leq(double a, double b) { return a < b || near(a, b); }

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

// Nonincreasing least-squares fit (pool adjacent violators).
std::vector<double> nonincreasing_fit(const std::vector<double>& v) {
  std::vector<double> mean;
  std::vector<int> count;
  for (double x : v) {
    mean.push_back(x);
    count.push_back(1);
    while (mean.size() > 1 && mean[mean.size() - 2] < mean.back()) {
      const int n = count.back() + count[count.size() - 2];
      const double m = (mean.back() * count.back() + mean[mean.size() - 2] * count[count.size() - 2]) / n;
      mean.pop_back();
      count.pop_back();
      mean.back() = m;
      count.back() = n;
    }
  }
  std::vector<double> out;
  for (size_t i = 0; i < mean.size(); ++i) out.insert(out.end(), count[i], mean[i]);
  return out;
}

}  // namespace

double psi(double u) { return 0.5 * std::erfc(u / std::sqrt(2.0)); }

void RegimeInput::validate() const {
  require(alpha > 0 && std::isfinite(alpha), "regime input: alpha must be > 0");
  require(kappa > 0 && kappa <= 2, "regime input: kappa must lie in (0, 2]");
  require(c_y > 0 && std::isfinite(c_y), "regime input: c_y must be > 0");
  require(a > 0 && std::isfinite(a), "regime input: a must be > 0");
  require(b >= 0 && std::isfinite(b), "regime input: b must be >= 0");
  require(beta > 0 && std::isfinite(beta), "regime input: beta must be > 0");
  require(d >= 0 && std::isfinite(d), "regime input: d must be >= 0");
  require(gamma > 0 && std::isfinite(gamma), "regime input: gamma must be > 0");
  require(L >= 0 && std::isfinite(L), "regime input: L must be >= 0");
  if (epsilon) require(*epsilon >= 0 && std::isfinite(*epsilon), "regime input: epsilon must be >= 0");
}

RegimeInput RegimeInput::from_meta(const SelfSimilarMeta& m, const TrendSpec& trend, double L) {
  RegimeInput in;
  in.alpha = m.alpha;
  in.kappa = m.kappa;
  in.c_y = m.c_y;
  in.a = 0.5;
  in.b = m.r / 2;
  in.beta = m.beta;
  in.d = trend.d;
  in.gamma = trend.gamma;
  in.L = L;
  in.b_numeric = m.r_numeric;
  return in;
}

const char* to_string(Case c) {
  switch (c) {
    case Case::I:
      return "I";
    case Case::II:
      return "II";
    case Case::III:
      return "III";
  }
  return "?";
}

std::vector<Regime> classify(const RegimeInput& in) {
  in.validate();
  const double al = in.alpha, ka = in.kappa;
  const double lim = std::min(in.beta, 2 * in.gamma);
  const double drift_rate = std::max(2 / in.beta_hat(), 1 / in.gamma_hat());
  std::vector<Regime> out;
  if (al < lim && leq(al, ka)) {
    Regime r;
    r.which = Case::I;
    r.p = 2 / ka - drift_rate;
    r.lu_exponent = -2 / al + ((ka - al) / ka) * (2 / al - std::max(1 / in.gamma, 2 / in.beta));
    r.l_zero_allowed = true;
    out.push_back(r);
  }
  if (al < lim && al > ka && !near(al, ka)) {
    Regime r;
    r.which = Case::II;
    r.epsilon_max = ((al - ka) / al) * (2 / ka - drift_rate);
    r.epsilon = in.epsilon.value_or(r.epsilon_max);
    if (!(r.epsilon > 0) || r.epsilon > r.epsilon_max * (1 + 1e-12)) {
      std::ostringstream os;
      os << "case II needs epsilon in (0, " << r.epsilon_max << "], got " << r.epsilon;
      throw DomainError(os.str());
    }
    r.p = r.epsilon * al / (al - ka);
    r.lu_exponent = -2 / al - r.epsilon;
    r.l_zero_allowed = near(r.epsilon, r.epsilon_max);
    out.push_back(r);
  }
  if (al >= lim || (al > ka && !near(al, ka))) {
    Regime r;
    r.which = Case::III;
    r.p = 0;
    r.lu_exponent = std::min({-2 / al, -2 / in.beta, -1 / in.gamma});
    r.l_zero_allowed = al >= lim;
    out.push_back(r);
  }
  return out;
}

std::optional<Regime> select_regime(const std::vector<Regime>& regimes, double lu_exponent, double tol) {
  for (const auto& r : regimes)
    if (std::abs(r.lu_exponent - lu_exponent) <= tol * std::max(1.0, std::abs(lu_exponent))) return r;
  return std::nullopt;
}

BermanCurve::BermanCurve(std::vector<double> xs, std::vector<double> values) {
  require(xs.size() == values.size() && xs.size() >= 2, "Berman curve needs at least two points");
  std::vector<size_t> order(xs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  for (size_t i : order) {
    xs_.push_back(xs[i]);
    values_.push_back(std::max(values[i], 0.0));
  }
  for (size_t i = 1; i < xs_.size(); ++i)
    require(xs_[i] > xs_[i - 1], "Berman curve: x values must be distinct");
  values_ = nonincreasing_fit(values_);

  const size_t n = xs_.size();
  if (n >= 4) {
    spline_ = std::make_shared<const Pchip>(std::vector<double>{xs_}, std::vector<double>{values_});
  }

  // Exponential tail from the last three points.
  const size_t k = std::min<size_t>(3, n);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  bool positive = true;
  for (size_t i = n - k; i < n; ++i) {
    if (!(values_[i] > 0)) positive = false;
    const double y = positive ? std::log(values_[i]) : 0;
    sx += xs_[i];
    sy += y;
    sxx += xs_[i] * xs_[i];
    sxy += xs_[i] * y;
  }
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  tail_zero_ = !positive || !(slope < 0);
  tail_rate_ = tail_zero_ ? 0 : -slope;
}

BermanCurve BermanCurve::from_table(const BermanTable& table, double kappa, double se_shift) {
  const auto col = table.column(kappa);
  std::vector<double> xs, v;
  for (const auto& e : col) {
    xs.push_back(e.x);
    v.push_back(std::max(0.0, e.value + se_shift * e.std_error));
  }
  return {xs, v};
}

double BermanCurve::operator()(double x) const {
  if (x <= xs_.front()) return values_.front();
  if (x >= xs_.back()) {
    if (tail_zero_) return x == xs_.back() ? values_.back() : 0.0;
    return values_.back() * std::exp(-tail_rate_ * (x - xs_.back()));
  }
  const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  const size_t i = static_cast<size_t>(it - xs_.begin()) - 1;
  if (!spline_) return values_[i] + (x - xs_[i]) / (xs_[i + 1] - xs_[i]) * (values_[i + 1] - values_[i]);
  return std::clamp((*spline_)(x), values_[i + 1], values_[i]);
}

namespace {

struct IntegralSetup {
  double scale;  // (a c_y)^{1/kappa}
  double dd, bb;
  double exponent;  // 1 - kappa / alpha
};

IntegralSetup integral_setup(const RegimeInput& in, const Regime& regime) {
  require(regime.which != Case::III, "constant_case_i_ii: regime must be case I or II");
  IntegralSetup s{std::pow(in.a * in.c_y, 1 / in.kappa), 0, 0, 1 - in.kappa / in.alpha};
  bool use_d, use_b;
  if (regime.which == Case::I) {
    use_d = leq(2 * in.gamma, in.beta);
    use_b = leq(in.beta, 2 * in.gamma);
  } else {
    const double f = (in.alpha - in.kappa) / in.alpha;
    use_d = near(regime.epsilon, f * (2 / in.kappa - 1 / in.gamma_hat()));
    use_b = near(regime.epsilon, f * (2 / in.kappa - 2 / in.beta_hat()));
  }
  s.dd = use_d ? in.d : 0;
  s.bb = use_b ? in.b : 0;
  const bool decays = s.dd > 0 || s.bb > 0;
  if (!decays) {
    require(in.L > 0, "constant_case_i_ii: without trend decay the integral needs L > 0");
    require(s.exponent > 0, "constant_case_i_ii: integral diverges (no decay in z)");
  }
  return s;
}

double integral_value(const RegimeInput& in, const IntegralSetup& s, const BermanCurve& curve, double* err) {
  const double ratio = in.kappa / in.alpha;
  auto integrand = [&](double w) {
    const double z = std::pow(w, ratio);
    double expo = 0;
    if (s.dd > 0) expo += s.dd * std::pow(z, in.gamma);
    if (s.bb > 0) expo += s.bb * std::pow(z, in.beta);
    double arg = 0;
    if (in.L > 0) arg = w == 0 ? (s.exponent < 0 ? HUGE_VAL : 0.0) : in.L * s.scale * std::pow(w, s.exponent);
    const double b = std::isfinite(arg) ? curve(arg) : 0.0;
    return ratio * std::exp(-expo) * b;
  };
  const auto r = integrate_to_infinity<double>(integrand, 0.0, 1e-10, 1e-13, 1e-12);
  if (!r.converged)
    throw NumericError("constant_case_i_ii: quadrature did not converge", r.value != 0 ? r.error / r.value : r.error);
  if (err) *err = r.error;
  return r.value;
}

}  // namespace

ConstantResult constant_case_i_ii(const RegimeInput& in, const Regime& regime, const BermanCurve& curve,
                                  const BermanCurve* lower, const BermanCurve* upper) {
  in.validate();
  const auto s = integral_setup(in, regime);
  ConstantResult out;
  double qerr = 0;
  out.c = s.scale * integral_value(in, s, curve, &qerr);
  out.quadrature_error = s.scale * qerr;
  if (lower && upper) {
    const double lo = s.scale * integral_value(in, s, *lower, nullptr);
    const double hi = s.scale * integral_value(in, s, *upper, nullptr);
    out.table_error = std::max(std::abs(hi - out.c), std::abs(out.c - lo));
  }
  out.error = out.quadrature_error + out.table_error;
  return out;
}

ConstantResult constant_case_i_ii(const RegimeInput& in, const Regime& regime, const BermanTable& table) {
  std::vector<BermanTableEntry> col;
  try {
    col = table.column(in.kappa);
  } catch (const DomainError&) {
    std::ostringstream os;
    os << "Berman table lacks kappa = " << in.kappa << "; needed x range [0, "
       << (in.L > 0 ? "inf" : "0") << ")";
    throw DomainError(os.str());
  }
  if (col.size() < 2 || col.front().x != 0) {
    std::ostringstream os;
    os << "Berman table column kappa = " << in.kappa << " must start at x = 0 and hold at least two points";
    throw DomainError(os.str());
  }
  const auto mid = BermanCurve::from_table(table, in.kappa);
  const auto lo = BermanCurve::from_table(table, in.kappa, -1);
  const auto hi = BermanCurve::from_table(table, in.kappa, +1);
  return constant_case_i_ii(in, regime, mid, &lo, &hi);
}

Drift case_iii_drift(const RegimeInput& in) {
  Drift h;
  if (leq(in.beta, std::min(in.alpha, 2 * in.gamma)) && in.b > 0)
    h.add(std::pow(in.a, -in.beta / in.alpha) * in.b, in.beta);
  if (leq(2 * in.gamma, std::min(in.alpha, in.beta)) && in.d > 0)
    h.add(std::pow(in.a, -in.gamma / in.alpha) * in.d, in.gamma);
  return h;
}

bool case_iii_closed_form(const RegimeInput& in) {
  const double lim = std::min(in.beta, 2 * in.gamma);
  return in.alpha > lim && !near(in.alpha, lim);
}

BermanQuery case_iii_query(const RegimeInput& in, const std::optional<KernelSpec>& process, double delta,
                           long n_paths, std::uint64_t seed) {
  in.validate();
  BermanQuery q;
  if (!case_iii_closed_form(in)) {
    require(process.has_value(), "case III constant needs the process Y when alpha <= min(beta, 2 gamma)");
    q.zeta = process;
  }
  q.drift = case_iii_drift(in);
  q.x = in.L * std::pow(in.a, 1 / in.kappa);
  q.horizon = std::numeric_limits<double>::infinity();
  q.delta = delta;
  q.n_paths = n_paths;
  q.seed = seed;
  return q;
}

ConstantResult constant_case_iii(const RegimeInput& in, const std::optional<CaseIiiOptions>& sampling) {
  in.validate();
  ConstantResult out;
  if (case_iii_closed_form(in)) {
    out.c = std::exp(-case_iii_drift(in)(in.L * std::pow(in.a, 1 / in.kappa)));
    return out;
  }
  require(sampling.has_value(), "case III constant with alpha <= min(beta, 2 gamma) needs sampling options");
  const auto q = case_iii_query(in, sampling->process, sampling->delta, sampling->n_paths, sampling->seed);
  const auto e = estimate_berman(q);
  out.c = e.value;
  out.error = e.std_error;
  out.table_error = e.std_error;
  return out;
}

std::string example_for(Family f) {
  switch (f) {
    case Family::EX31:
      return "3.1";
    case Family::SUBFBM:
      return "3.2";
    case Family::NEGSUBFBM:
      return "3.3";
    case Family::WEIGHTEDFBM:
      return "3.4";
    case Family::INTFBM:
      return "3.5";
    case Family::TIMEAVGFBM:
      return "3.6";
    case Family::DUALFBM:
      return "3.7";
    case Family::FBM:
      break;
  }
  throw DomainError("no worked example for FBM");
}

ExampleConstant example_constant(const std::string& id, const KernelSpec& spec, double L, double d,
                                 std::optional<double> epsilon) {
  validate(spec);
  if (example_for(spec.family) != id)
    throw DomainError("example " + id + " does not describe family " + std::string(to_string(spec.family)));
  require(L >= 0 && d >= 0, "example constants need L >= 0 and d >= 0");
  const auto m = meta(spec);
  ExampleConstant ex;
  ex.example = id;
  ex.input = RegimeInput::from_meta(m, TrendSpec{d, m.beta / 2}, L);
  ex.input.epsilon = epsilon;
  const double al = m.alpha;
  auto pick = [&](Case c) {
    for (const auto& r : classify(ex.input))
      if (r.which == c) return r;
    throw DomainError("example " + id + ": expected regime is not applicable");
  };
  auto query_with = [&](Drift h, double x) {
    BermanQuery q;
    q.zeta = spec;
    q.drift = std::move(h);
    q.x = x;
    q.horizon = std::numeric_limits<double>::infinity();
    return q;
  };
  const double sqrt2 = std::sqrt(2.0);

  if (id == "3.1") {
    ex.regime = pick(Case::III);
    ex.c = std::exp(-al * std::pow(2, 1 - al) * L - d * std::sqrt(L));
  } else if (id == "3.2") {
    ex.regime = pick(Case::III);
    ex.query = query_with(Drift::power(m.r, al).add(sqrt2 * d, al / 2), std::pow(2, -1 / al) * L);
  } else if (id == "3.3") {
    ex.regime = pick(Case::III);
    ex.c = std::exp(-std::pow(2, 2 / al) * al * (al + 1) / (std::pow(2, al + 1) - 8) * L * L -
                    std::pow(2, 1 / al - 0.5) * d * L);
    ex.note = "displayed constant uses alpha(alpha+1); the general case-III drift gives alpha(alpha-1)";
  } else if (id == "3.4") {
    const double kappa = spec.param("kappa"), a = spec.param("a");
    if (kappa > 1) {
      ex.regime = pick(Case::III);
      ex.c = std::exp(-std::pow(2, (1 - kappa) / (a + kappa - 1) - a / kappa) * m.r * std::pow(L, a) -
                      std::pow(2, a / (2 * (a + kappa - 1)) - a / (2 * kappa)) * d * std::pow(L, a / 2));
    } else if (kappa == 1) {
      ex.regime = pick(Case::III);
      ex.query = query_with(Drift::power(1, a).add(sqrt2 * d, a / 2), L / 2);
    } else if (epsilon && *epsilon == 0) {
      ex.regime = pick(Case::III);
      ex.note = "epsilon = 0: the case-III drift vanishes (beta > alpha, 2 gamma > alpha), so the constant is a "
                "driftless Berman constant of Y on [0, inf); the displayed negative drift is not used";
    } else {
      ex.regime = pick(Case::II);
      ex.needs_table = true;
      ex.note = "integral against the fBm Berman table; see constant_case_i_ii";
    }
  } else if (id == "3.5") {
    ex.regime = pick(Case::III);
    ex.c = constant_case_iii(ex.input).c;
    ex.note = "b = R/2 with R fitted numerically";
  } else if (id == "3.6") {
    require(al >= 1, "example 3.6 covers alpha >= 1 only");
    ex.regime = pick(Case::III);
    if (al > 1) {
      ex.c = std::exp(-std::pow(2, 1 / (2 * al)) * d * std::sqrt(L) - std::pow(2, 1 / al) * ((al + 2) / 4) * L);
      ex.note = "displayed constant omits the factors 2^{-1/4} and 2^{-1/2} that the general case-III drift carries";
    } else {
      ex.query = query_with(Drift::power(1, 1).add(sqrt2 * d, 0.5), L / sqrt2);
      ex.note = "displayed drift t; the general case-III drift gives 2t";
    }
  } else if (id == "3.7") {
    require(al >= 1, "example 3.7 covers alpha >= 1 only");
    ex.regime = pick(Case::III);
    if (al > 1)
      ex.c = std::exp(-std::pow(2, 1 / (2 * al) - 0.25) * d * std::sqrt(L) - std::pow(2, 1 / al - 0.5) * L);
    else
      ex.query = query_with(Drift::power(3, 1).add(sqrt2 * d, 0.5), L / sqrt2);
  }
  if (ex.c) ex.regime.c = ex.c;
  return ex;
}

Approximation approximate_probability(const RegimeInput& in, const Regime& regime, double u) {
  require(regime.c.has_value(), "approximate_probability: regime has no constant");
  require(u > 0, "approximate_probability: u must be > 0");
  return {*regime.c * std::pow(u, regime.p) * psi(u), in.L * std::pow(u, regime.lu_exponent)};
}

void to_json(nlohmann::json& j, const RegimeInput& in) {
  j = {{"alpha", in.alpha}, {"kappa", in.kappa}, {"c_y", in.c_y}, {"a", in.a},       {"b", in.b},
       {"beta", in.beta},   {"d", in.d},         {"gamma", in.gamma}, {"L", in.L}, {"b_numeric", in.b_numeric},
       {"beta_hat", in.beta_hat()}, {"gamma_hat", in.gamma_hat()}};
  j["epsilon"] = in.epsilon ? nlohmann::json(*in.epsilon) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, RegimeInput& in) {
  in = RegimeInput{};
  if (j.contains("kernel")) {
    const auto spec = j["kernel"].get<KernelSpec>();
    TrendSpec trend;
    if (j.contains("trend")) trend = j["trend"].get<TrendSpec>();
    in = RegimeInput::from_meta(meta(spec), trend, j.value("L", 0.0));
  }
  in.alpha = j.value("alpha", in.alpha);
  in.kappa = j.value("kappa", in.kappa);
  in.c_y = j.value("c_y", in.c_y);
  in.a = j.value("a", in.a);
  in.b = j.value("b", in.b);
  in.beta = j.value("beta", in.beta);
  in.d = j.value("d", in.d);
  in.gamma = j.value("gamma", in.gamma);
  in.L = j.value("L", in.L);
  if (j.contains("epsilon") && !j["epsilon"].is_null()) in.epsilon = j["epsilon"].get<double>();
  in.validate();
}

void to_json(nlohmann::json& j, const Regime& r) {
  j = {{"case", to_string(r.which)},
       {"p", r.p},
       {"lu_exponent", r.lu_exponent},
       {"l_zero_allowed", r.l_zero_allowed},
       {"c_error", r.c_error}};
  j["c"] = r.c ? nlohmann::json(*r.c) : nlohmann::json(nullptr);
  if (r.which == Case::II) {
    j["epsilon"] = r.epsilon;
    j["epsilon_max"] = r.epsilon_max;
  }
  if (!r.note.empty()) j["note"] = r.note;
}

void to_json(nlohmann::json& j, const ExampleConstant& e) {
  j = {{"example", e.example}, {"input", e.input}, {"regime", e.regime}, {"needs_table", e.needs_table}};
  j["c"] = e.c ? nlohmann::json(*e.c) : nlohmann::json(nullptr);
  j["query"] = e.query ? nlohmann::json(*e.query) : nlohmann::json(nullptr);
  if (!e.note.empty()) j["note"] = e.note;
}

}  // namespace lsgp
