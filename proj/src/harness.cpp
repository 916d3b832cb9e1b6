#include "lsgp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "lsgp/errors.hpp"
#include "lsgp/sampler.hpp"

namespace lsgp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* estimator_name(Estimator e) { return e == Estimator::CRUDE ? "CRUDE" : "MEANSHIFT_IS"; }
const char* process_name(ProcessKind p) { return p == ProcessKind::RAW ? "RAW" : "RISK_X"; }

// Schema helpers: every failure names the field path.
class Fields {
 public:
  Fields(const json& j, std::string source, std::string prefix)
      : j_(j), source_(std::move(source)), prefix_(std::move(prefix)) {
    if (!j_.is_object()) fail("", std::string("expected an object, got ") + j_.type_name());
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw DomainError(source_ + ": field '" + path(key) + "': " + what);
  }

  std::string path(const std::string& key) const {
    return prefix_.empty() ? key : (key.empty() ? prefix_ : prefix_ + "." + key);
  }

  void allow(std::initializer_list<const char*> keys) const {
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& item : j_.items())
      if (!ok.count(item.key())) {
        std::string list;
        for (const auto& k : ok) list += (list.empty() ? "" : ", ") + k;
        fail(item.key(), "unknown field (allowed: " + list + ")");
      }
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& at(const char* key) const {
    if (!j_.contains(key)) fail(key, "missing required field");
    return j_.at(key);
  }

  double number(const char* key, std::optional<double> def = {}) const {
    if (!has(key)) {
      if (def) return *def;
      fail(key, "missing required field");
    }
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(key, std::string("expected a number, got ") + v.type_name());
    return v.get<double>();
  }

  long integer(const char* key, std::optional<long> def = {}) const {
    if (!has(key)) {
      if (def) return *def;
      fail(key, "missing required field");
    }
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, std::string("expected an integer, got ") + v.type_name());
    return v.get<long>();
  }

  std::uint64_t unsigned_integer(const char* key, std::uint64_t def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      fail(key, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const char* key, bool def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) fail(key, std::string("expected true or false, got ") + v.type_name());
    return v.get<bool>();
  }

  std::string string(const char* key, std::optional<std::string> def = {}) const {
    if (!has(key)) {
      if (def) return *def;
      fail(key, "missing required field");
    }
    const auto& v = j_.at(key);
    if (!v.is_string()) fail(key, std::string("expected a string, got ") + v.type_name());
    return v.get<std::string>();
  }

  const std::string& source() const { return source_; }

 private:
  const json& j_;
  std::string source_;
  std::string prefix_;
};

KernelSpec parse_kernel(const json& j, const std::string& source) {
  Fields f(j, source, "kernel");
  f.allow({"family", "params"});
  KernelSpec spec;
  try {
    spec.family = family_from_string(f.string("family"));
  } catch (const DomainError& e) {
    f.fail("family", e.what());
  }
  const auto& params = f.at("params");
  if (!params.is_object()) f.fail("params", "expected an object of named numbers");
  for (const auto& item : params.items()) {
    if (!item.value().is_number()) f.fail("params." + item.key(), "expected a number");
    spec.params[item.key()] = item.value().get<double>();
  }
  try {
    validate(spec);
  } catch (const DomainError& e) {
    f.fail("params", e.what());
  }
  return spec;
}

Case parse_case(const std::string& s, const Fields& f) {
  if (s == "I") return Case::I;
  if (s == "II") return Case::II;
  if (s == "III") return Case::III;
  f.fail("case", "expected I, II or III, got " + s);
}

}  // namespace

GridSpec ExperimentConfig::grid() const {
  return GridSpec{0.0, process == ProcessKind::RISK_X ? 1.0 : horizon, n_points};
}

void ExperimentConfig::validate() const {
  lsgp::validate(kernel);
  trend.validate();
  if (u_ladder.empty()) throw DomainError("config: u_ladder must not be empty");
  for (size_t i = 0; i < u_ladder.size(); ++i) {
    if (!std::isfinite(u_ladder[i])) throw DomainError("config: u_ladder entries must be finite");
    if (i > 0 && !(u_ladder[i] > u_ladder[i - 1])) throw DomainError("config: u_ladder must be increasing");
  }
  if (!(L >= 0)) throw DomainError("config: L must be >= 0");
  if (n_points < 3) throw DomainError("config: n_points must be >= 3");
  if (refine && (n_points - 1) % 2 != 0) throw DomainError("config: refine needs an even number of grid cells");
  if (n_paths < 1) throw DomainError("config: n_paths must be >= 1");
  if (!(horizon > 0)) throw DomainError("config: horizon must be > 0");
  if (process == ProcessKind::RISK_X && horizon != 1)
    throw DomainError("config: RISK_X experiments live on [0, 1]; horizon must be 1");
  if (!(is_shift_scale >= 0)) throw DomainError("config: is_shift_scale must be >= 0");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    size_t line = 1, col = 1;
    for (size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream os;
    os << source << ":" << line << ":" << col << ": JSON parse error: " << e.what();
    throw DomainError(os.str());
  }
  Fields f(j, source, "");
  f.allow({"name", "kernel", "process", "trend", "horizon", "u_ladder", "L", "n_points", "refine", "refine_order",
           "n_paths", "estimator", "is_shift_scale", "seed", "out_dir", "asymptotics"});
  ExperimentConfig c;
  c.name = f.string("name", c.name);
  c.kernel = parse_kernel(f.at("kernel"), source);
  const auto process = f.string("process", "RISK_X");
  if (process == "RISK_X")
    c.process = ProcessKind::RISK_X;
  else if (process == "RAW")
    c.process = ProcessKind::RAW;
  else
    f.fail("process", "expected RISK_X or RAW, got " + process);
  if (f.has("trend")) {
    Fields t(f.at("trend"), source, "trend");
    t.allow({"d", "gamma"});
    c.trend.d = t.number("d", 0.0);
    c.trend.gamma = t.number("gamma", 1.0);
    try {
      c.trend.validate();
    } catch (const DomainError& e) {
      t.fail("", e.what());
    }
  }
  c.horizon = f.number("horizon", 1.0);
  const auto& ladder = f.at("u_ladder");
  if (!ladder.is_array() || ladder.empty()) f.fail("u_ladder", "expected a nonempty array of numbers");
  for (size_t i = 0; i < ladder.size(); ++i) {
    if (!ladder[i].is_number()) f.fail("u_ladder[" + std::to_string(i) + "]", "expected a number");
    c.u_ladder.push_back(ladder[i].get<double>());
  }
  c.L = f.number("L", 0.0);
  c.n_points = static_cast<int>(f.integer("n_points", c.n_points));
  c.refine = f.boolean("refine", c.refine);
  if (f.has("refine_order")) c.refine_order = f.number("refine_order");
  c.n_paths = f.integer("n_paths", c.n_paths);
  const auto est = f.string("estimator", "MEANSHIFT_IS");
  if (est == "CRUDE")
    c.estimator = Estimator::CRUDE;
  else if (est == "MEANSHIFT_IS")
    c.estimator = Estimator::MEANSHIFT_IS;
  else
    f.fail("estimator", "expected CRUDE or MEANSHIFT_IS, got " + est);
  c.is_shift_scale = f.number("is_shift_scale", 1.0);
  c.seed = f.unsigned_integer("seed", 0);
  c.out_dir = f.string("out_dir", c.out_dir);
  if (f.has("asymptotics")) {
    Fields a(f.at("asymptotics"), source, "asymptotics");
    a.allow({"enabled", "case", "epsilon", "berman_table", "c", "p", "lu_exponent", "berman_delta", "berman_paths"});
    auto& ac = c.asymptotics;
    ac.enabled = a.boolean("enabled", true);
    if (a.has("case")) ac.which = parse_case(a.string("case"), a);
    if (a.has("epsilon")) ac.epsilon = a.number("epsilon");
    if (a.has("berman_table")) ac.berman_table = a.string("berman_table");
    if (a.has("c")) ac.c = a.number("c");
    if (a.has("p")) ac.p = a.number("p");
    if (a.has("lu_exponent")) ac.lu_exponent = a.number("lu_exponent");
    ac.berman_delta = a.number("berman_delta", ac.berman_delta);
    ac.berman_paths = a.integer("berman_paths", ac.berman_paths);
  }
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw DomainError(source + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DomainError("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path);
}

Interval wilson_interval(long hits, long n, double z) {
  if (n <= 0) return {0, 1};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(hits) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z / (1 + z2 / nn) * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

std::optional<Regime> resolve_regime(const ExperimentConfig& config, std::vector<std::string>* notes,
                                     RegimeInput* input_out) {
  auto note = [&](const std::string& s) {
    if (notes) notes->push_back(s);
  };
  const auto& ac = config.asymptotics;
  if (!ac.enabled) return std::nullopt;
  if (ac.c && ac.p && ac.lu_exponent) {
    Regime r;
    r.which = ac.which.value_or(Case::III);
    r.p = *ac.p;
    r.lu_exponent = *ac.lu_exponent;
    r.c = ac.c;
    r.note = "constant, exponent and L_u scaling supplied by the config";
    return r;
  }
  if (config.process != ProcessKind::RISK_X) {
    note("asymptotics need X(t) = Y(1) - Y(t) or explicit c, p and lu_exponent; ratio columns omitted");
    return std::nullopt;
  }
  const auto m = meta(config.kernel);
  if (!m.corollary_applicable())
    note("kernel metadata violates beta >= 1, beta > alpha/2; asymptotics are reported without guarantee");
  auto in = RegimeInput::from_meta(m, config.trend, config.L);
  in.epsilon = ac.epsilon;
  if (input_out) *input_out = in;
  const auto regimes = classify(in);
  std::optional<Regime> chosen;
  for (const auto& r : regimes)
    if (ac.which ? r.which == *ac.which : r.which == Case::III) chosen = r;
  if (!chosen && !ac.which && !regimes.empty()) chosen = regimes.front();
  if (!chosen) {
    note("requested case is not applicable to these parameters");
    return std::nullopt;
  }
  if (ac.lu_exponent && std::abs(*ac.lu_exponent - chosen->lu_exponent) > 1e-12) {
    note("requested L_u exponent matches no applicable case (uncovered)");
    return std::nullopt;
  }
  if (in.b_numeric) note("b = R/2 uses a numerically fitted R");
  if (ac.c) {
    chosen->c = ac.c;
  } else if (chosen->which == Case::III) {
    std::optional<CaseIiiOptions> sampling;
    if (!case_iii_closed_form(in))
      sampling = CaseIiiOptions{config.kernel, ac.berman_delta, ac.berman_paths, config.seed ^ 0xBE55ull};
    const auto c = constant_case_iii(in, sampling);
    chosen->c = c.c;
    chosen->c_error = c.error;
    if (sampling) note("case III constant estimated by Monte Carlo on a truncated horizon");
  } else if (ac.berman_table) {
    const auto table = load_berman_table(*ac.berman_table);
    const auto c = constant_case_i_ii(in, *chosen, table);
    chosen->c = c.c;
    chosen->c_error = c.error;
  } else {
    note("case I/II constant needs asymptotics.berman_table; ratio columns omitted");
  }
  return chosen;
}

namespace {

struct PathSums {
  Eigen::MatrixXd fine, coarse;  // n_paths x n_u, weighted hit indicators
  Eigen::VectorXd mu, t_star;
};

double mean_of(const Eigen::VectorXd& v) { return v.mean(); }
double se_of(const Eigen::VectorXd& v) {
  const auto n = static_cast<double>(v.size());
  if (v.size() < 2) return 0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / (n - 1) / n);
}

RunReport run_estimator(const ExperimentConfig& config, Estimator estimator, const std::optional<Regime>& regime,
                        std::vector<std::string> notes) {
  config.validate();
  const GridSpec grid = config.grid();
  const auto gen = config.process == ProcessKind::RISK_X ? make_risk_x_generator(config.kernel, grid)
                                                          : make_generator(config.kernel, grid);
  const Eigen::VectorXd trend = config.trend.on(grid);
  const int n = grid.n_points;
  const int cells = n - 1;
  const double delta = grid.spacing();
  const auto nu = static_cast<Eigen::Index>(config.u_ladder.size());
  const double lu_exp = regime ? regime->lu_exponent : config.asymptotics.lu_exponent.value_or(0.0);
  std::vector<double> l_u(nu);
  for (Eigen::Index k = 0; k < nu; ++k)
    l_u[k] = config.L == 0 ? 0.0 : config.L * std::pow(std::abs(config.u_ladder[k]), lu_exp);

  RunReport report;
  report.config = config;
  report.estimator = estimator;
  report.regime = regime;
  report.notes = std::move(notes);

  const Eigen::VectorXd var = gen->variances();
  auto measure = [&](const auto& x, double u, int stride) {
    double m = 0;
    for (int j = 0; j < cells; j += stride)
      if (x(j) - trend(j) > u) m += stride * delta;
    return m;
  };

  for (Eigen::Index k0 = 0; k0 < nu;) {
    // Crude sampling shares one set of paths across the ladder; IS shifts per u.
    const Eigen::Index k1 = estimator == Estimator::CRUDE ? nu : k0 + 1;
    const auto start = std::chrono::steady_clock::now();
    double mu = 0, t_star = 0;
    int i_star = 0;
    Eigen::VectorXd shift;
    if (estimator == Estimator::MEANSHIFT_IS) {
      const double u = config.u_ladder[k0];
      double best = -1;
      for (int i = 0; i < n; ++i) {
        const double barrier = u + trend(i);
        if (var(i) <= 0 || barrier <= 0) continue;
        const double score = std::sqrt(var(i)) / barrier;
        if (score > best) {
          best = score;
          i_star = i;
        }
      }
      if (best > 0) {
        mu = config.is_shift_scale * (u + trend(i_star)) / var(i_star);
        shift = mu * gen->covariance_column(i_star);
      }
      t_star = grid.point(i_star);
    }
    const Eigen::Index span = k1 - k0;
    Eigen::MatrixXd fine(config.n_paths, span), coarse(config.n_paths, span);
    for_each_path(*gen, config.n_paths, config.seed, [&](long p, const auto& x0) {
      double w = 1;
      Eigen::VectorXd x = x0;
      if (mu != 0) {
        w = std::exp(-mu * x(i_star) - 0.5 * mu * mu * var(i_star));
        x += shift;
      }
      for (Eigen::Index k = k0; k < k1; ++k) {
        const double u = config.u_ladder[k];
        const bool hf = measure(x, u, 1) > l_u[k];
        const bool hc = config.refine && measure(x, u, 2) > l_u[k];
        fine(p, k - k0) = hf ? w : 0.0;
        coarse(p, k - k0) = hc ? w : 0.0;
      }
    });
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / static_cast<double>(span);

    const double order = config.refine_order.value_or(meta(config.kernel).kappa / 2);
    const double rp = std::pow(0.5, order);
    for (Eigen::Index k = k0; k < k1; ++k) {
      RuinRow row;
      row.u = config.u_ladder[k];
      row.l_u = l_u[k];
      const Eigen::VectorXd f = fine.col(k - k0);
      row.estimate = mean_of(f);
      row.std_error = se_of(f);
      row.n_hits = static_cast<long>((f.array() > 0).count());
      row.mu = mu;
      row.t_star = t_star;
      row.runtime_seconds = seconds;
      if (estimator == Estimator::CRUDE) {
        row.ci95 = wilson_interval(row.n_hits, config.n_paths);
        row.ess = static_cast<double>(row.n_hits);
        if (row.n_hits > 0 && row.n_hits < 10) row.flags.push_back("few_hits");
      } else {
        row.ci95 = {std::max(0.0, row.estimate - 1.959963984540054 * row.std_error),
                    std::min(1.0, row.estimate + 1.959963984540054 * row.std_error)};
        const double s1 = f.sum(), s2 = f.squaredNorm();
        row.ess = s2 > 0 ? s1 * s1 / s2 : 0.0;
        if (row.ess < 100) row.flags.push_back("low_ess");
      }
      if (row.n_hits == 0) {
        row.flags.push_back("insufficient");
        // One-sided 95% bound for zero hits.
        row.ci95 = {0.0, 1.0 - std::pow(0.05, 1.0 / static_cast<double>(config.n_paths))};
      }
      if (config.n_paths < 1000) row.flags.push_back("n_paths_below_1000");
      if (config.refine) {
        const Eigen::VectorXd c = coarse.col(k - k0);
        row.coarse = mean_of(c);
        const Eigen::VectorXd e = (f - rp * c) / (1 - rp);
        row.extrapolated = mean_of(e);
        row.extrapolated_se = se_of(e);
      }
      report.rows.push_back(row);
    }
    k0 = k1;
  }
  return report;
}

void add_ratios(RunReport& report, const Regime& regime) {
  if (!regime.c) return;
  for (auto& row : report.rows) {
    if (!(row.u > 0)) continue;
    const double asym = *regime.c * std::pow(row.u, regime.p) * psi(row.u);
    row.asymptotic = asym;
    if (asym > 0) {
      row.ratio = row.estimate / asym;
      row.ratio_ci = Interval{row.ci95.lo / asym, row.ci95.hi / asym};
      if (row.coarse) row.ratio_coarse = *row.coarse / asym;
    }
  }
  // Distance to 1 may not grow along the ladder beyond the CI half-widths.
  bool trending = true;
  const RuinRow* prev = nullptr;
  for (const auto& row : report.rows) {
    if (!row.ratio) continue;
    if (prev) {
      const double slack = (prev->ratio_ci->hi - prev->ratio_ci->lo + row.ratio_ci->hi - row.ratio_ci->lo) / 2;
      if (std::abs(*row.ratio - 1) > std::abs(*prev->ratio - 1) + slack) trending = false;
    }
    prev = &row;
  }
  if (prev) report.ratio_trending = trending;
}

}  // namespace

RunReport estimate_ruin_crude(const ExperimentConfig& config) {
  std::vector<std::string> notes;
  const auto regime = resolve_regime(config, &notes);
  return run_estimator(config, Estimator::CRUDE, regime, notes);
}

RunReport estimate_ruin_is(const ExperimentConfig& config) {
  std::vector<std::string> notes;
  const auto regime = resolve_regime(config, &notes);
  return run_estimator(config, Estimator::MEANSHIFT_IS, regime, notes);
}

RunReport estimate_ruin(const ExperimentConfig& config) {
  return config.estimator == Estimator::CRUDE ? estimate_ruin_crude(config) : estimate_ruin_is(config);
}

RunReport run_ratio_experiment(const ExperimentConfig& config, const Regime& regime) {
  auto report = run_estimator(config, config.estimator, regime, {});
  if (config.process == ProcessKind::RISK_X) {
    RegimeInput in = RegimeInput::from_meta(meta(config.kernel), config.trend, config.L);
    in.epsilon = config.asymptotics.epsilon;
    report.regime_input = in;
  }
  add_ratios(report, regime);
  return report;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {
std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }
}  // namespace

void write_ruin_csv(const RunReport& report, std::ostream& os) {
  os << "u,L_u,estimate,std_error,ci95_low,ci95_high,n_hits,ess,t_star,mu,coarse,extrapolated,extrapolated_se,"
        "asymptotic,ratio,ratio_ci_low,ratio_ci_high,ratio_coarse,flags\r\n";
  for (const auto& r : report.rows) {
    std::string flags;
    for (const auto& f : r.flags) flags += (flags.empty() ? "" : ";") + f;
    os << format_double(r.u) << ',' << format_double(r.l_u) << ',' << format_double(r.estimate) << ','
       << format_double(r.std_error) << ',' << format_double(r.ci95.lo) << ',' << format_double(r.ci95.hi) << ','
       << r.n_hits << ',' << format_double(r.ess) << ',' << format_double(r.t_star) << ',' << format_double(r.mu)
       << ',' << opt(r.coarse) << ',' << opt(r.extrapolated) << ','
       << (r.extrapolated ? format_double(r.extrapolated_se) : "") << ',' << opt(r.asymptotic) << ','
       << opt(r.ratio) << ',' << (r.ratio_ci ? format_double(r.ratio_ci->lo) : "") << ','
       << (r.ratio_ci ? format_double(r.ratio_ci->hi) : "") << ',' << opt(r.ratio_coarse) << ','
       << csv_field(flags) << "\r\n";
  }
}

void write_ratio_tsv(const RunReport& report, std::ostream& os) {
  os << "u\tratio\tratio_ci_low\tratio_ci_high\tratio_coarse\n";
  for (const auto& r : report.rows) {
    if (!r.ratio) continue;
    os << format_double(r.u) << '\t' << format_double(*r.ratio) << '\t' << format_double(r.ratio_ci->lo) << '\t'
       << format_double(r.ratio_ci->hi) << '\t' << opt(r.ratio_coarse) << '\n';
  }
}

void write_berman_tsv(const BermanTable& table, std::ostream& os) {
  os << "kappa\tx\tvalue\tstd_error\n";
  for (const auto& e : table.entries)
    os << format_double(e.kappa) << '\t' << format_double(e.x) << '\t' << format_double(e.value) << '\t'
       << format_double(e.std_error) << '\n';
}

Artifacts write_artifacts(const RunReport& report, const std::string& directory) {
  fs::create_directories(directory);
  Artifacts a;
  a.directory = directory;
  auto open = [&](const std::string& name) {
    const auto path = (fs::path(directory) / name).string();
    a.files.push_back(path);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DomainError("cannot write " + path);
    return os;
  };
  {
    auto os = open("report.json");
    os << json(report).dump(2) << '\n';
  }
  {
    auto os = open("ruin.csv");
    write_ruin_csv(report, os);
  }
  {
    auto os = open("ratio.tsv");
    write_ratio_tsv(report, os);
  }
  if (report.config.asymptotics.berman_table) {
    const auto table = load_berman_table(*report.config.asymptotics.berman_table);
    auto os = open("berman_curve.tsv");
    write_berman_tsv(table, os);
  }
  return a;
}

Artifacts run_experiment(const ExperimentConfig& config) {
  std::vector<std::string> notes;
  RegimeInput in;
  const auto regime = resolve_regime(config, &notes, &in);
  RunReport report = run_estimator(config, config.estimator, regime, notes);
  if (regime) {
    if (config.process == ProcessKind::RISK_X) report.regime_input = in;
    add_ratios(report, *regime);
  }
  for (const auto& row : report.rows)
    std::clog << "lsgp: u=" << row.u << " runtime " << row.runtime_seconds << " s\n";
  return write_artifacts(report, (fs::path(config.out_dir) / config.name).string());
}

Artifacts run_config(const std::string& path, std::optional<std::string> out_dir_override) {
  auto config = load_config(path);
  if (const char* env = std::getenv("LSGP_OUT_DIR"); env && *env) config.out_dir = env;
  if (out_dir_override) config.out_dir = *out_dir_override;
  return run_experiment(config);
}

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"name", c.name},
       {"kernel", c.kernel},
       {"process", process_name(c.process)},
       {"trend", c.trend},
       {"horizon", c.horizon},
       {"u_ladder", c.u_ladder},
       {"L", c.L},
       {"n_points", c.n_points},
       {"refine", c.refine},
       {"n_paths", c.n_paths},
       {"estimator", estimator_name(c.estimator)},
       {"is_shift_scale", c.is_shift_scale},
       {"seed", c.seed}};
  if (c.refine_order) j["refine_order"] = *c.refine_order;
  json a{{"enabled", c.asymptotics.enabled},
         {"berman_delta", c.asymptotics.berman_delta},
         {"berman_paths", c.asymptotics.berman_paths}};
  if (c.asymptotics.which) a["case"] = to_string(*c.asymptotics.which);
  if (c.asymptotics.epsilon) a["epsilon"] = *c.asymptotics.epsilon;
  if (c.asymptotics.berman_table) a["berman_table"] = *c.asymptotics.berman_table;
  if (c.asymptotics.c) a["c"] = *c.asymptotics.c;
  if (c.asymptotics.p) a["p"] = *c.asymptotics.p;
  if (c.asymptotics.lu_exponent) a["lu_exponent"] = *c.asymptotics.lu_exponent;
  j["asymptotics"] = a;
}

void to_json(json& j, const RuinRow& r) {
  j = {{"u", r.u},
       {"L_u", r.l_u},
       {"estimate", r.estimate},
       {"std_error", r.std_error},
       {"ci95", {r.ci95.lo, r.ci95.hi}},
       {"n_hits", r.n_hits},
       {"ess", r.ess},
       {"t_star", r.t_star},
       {"mu", r.mu},
       {"flags", r.flags}};
  auto put = [&](const char* k, const std::optional<double>& v) { j[k] = v ? json(*v) : json(nullptr); };
  put("coarse", r.coarse);
  put("extrapolated", r.extrapolated);
  j["extrapolated_se"] = r.extrapolated ? json(r.extrapolated_se) : json(nullptr);
  put("asymptotic", r.asymptotic);
  put("ratio", r.ratio);
  j["ratio_ci"] = r.ratio_ci ? json{r.ratio_ci->lo, r.ratio_ci->hi} : json(nullptr);
  put("ratio_coarse", r.ratio_coarse);
}

void to_json(json& j, const RunReport& r) {
  j = {{"config", r.config},
       {"seed", r.config.seed},
       {"estimator", estimator_name(r.estimator)},
       {"rows", r.rows},
       {"notes", r.notes},
       {"ratio_band_note", "the [0.5, 1.5] ratio band at finite u is an engineering choice, not a limit result"}};
  j["regime"] = r.regime ? json(*r.regime) : json(nullptr);
  j["regime_input"] = r.regime_input ? json(*r.regime_input) : json(nullptr);
  j["ratio_trending"] = r.ratio_trending ? json(*r.ratio_trending) : json(nullptr);
}

}  // namespace lsgp
