#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lsgp/asymptotics.hpp"
#include "lsgp/berman.hpp"
#include "lsgp/errors.hpp"
#include "lsgp/harness.hpp"
#include "lsgp/kernels.hpp"
#include "lsgp/sampler.hpp"
#include "lsgp/sojourn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lsgp;

namespace {

struct Globals {
  std::uint64_t seed{0};
  bool seed_set{false};
  int threads{0};
  std::string out_dir;
};

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DomainError("cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DomainError(source + ": " + e.what());
  }
}

/// Inline JSON object or a path to a file holding one.
KernelSpec kernel_arg(const std::string& arg) {
  const bool inline_json = !arg.empty() && arg.front() == '{';
  const json j = parse_json(inline_json ? arg : read_file(arg), inline_json ? "--kernel" : arg);
  try {
    auto spec = j.get<KernelSpec>();
    validate(spec);
    return spec;
  } catch (const json::exception& e) {
    throw DomainError("kernel spec: " + std::string(e.what()));
  }
}

/// "coef:exponent,coef:exponent"
Drift drift_arg(const std::string& arg) {
  Drift d;
  std::stringstream ss(arg);
  std::string term;
  while (std::getline(ss, term, ',')) {
    const auto colon = term.find(':');
    if (colon == std::string::npos) throw DomainError("drift term '" + term + "' must read coef:exponent");
    try {
      d.add(std::stod(term.substr(0, colon)), std::stod(term.substr(colon + 1)));
    } catch (const std::logic_error&) {
      throw DomainError("drift term '" + term + "' is not numeric");
    }
  }
  return d;
}

fs::path out_dir(const Globals& g, const std::string& fallback = "out") {
  std::string dir = fallback;
  if (const char* env = std::getenv("LSGP_OUT_DIR"); env && *env) dir = env;
  if (!g.out_dir.empty()) dir = g.out_dir;
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DomainError("cannot write " + path.string());
  return os;
}

void emit_json(const json& j, const fs::path& path) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
  std::cout << path.string() << '\n';
}

class Timer {
 public:
  explicit Timer(std::string label) : label_(std::move(label)), start_(std::chrono::steady_clock::now()) {}
  ~Timer() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::clog << "lsgp: " << label_ << " took " << s << " s\n";
  }

 private:
  std::string label_;
  std::chrono::steady_clock::time_point start_;
};

// kernels validate

int kernels_validate(const Globals& g, const std::string& spec_path, double tol_s1, double tol_limits) {
  Timer t("kernels validate");
  const auto spec = kernel_arg(spec_path);
  const auto m = meta(spec);
  std::vector<ValidationReport> reports{validate_psd(spec, 1e-8, 20, 64, g.seed), validate_s1(spec, tol_s1),
                                        validate_s2(spec, tol_limits), validate_cor23(spec, tol_limits)};
  bool ok = true;
  for (const auto& r : reports) ok = ok && (r.passed || r.skipped);
  json j{{"kernel", spec}, {"meta", m}, {"checks", reports}, {"passed", ok}, {"seed", g.seed}};
  emit_json(j, out_dir(g) / "kernels_validate.json");
  return ok ? 0 : 1;
}

// sample

struct SampleArgs {
  std::string kernel;
  double t_end{1};
  int points{101};
  long paths{10};
  bool risk_x{false};
  bool binary{false};
  std::vector<double> u;
  double trend_d{0};
  double trend_gamma{1};
  std::vector<double> L{0};
};

int sample(const Globals& g, const SampleArgs& a) {
  Timer t("sample");
  const auto spec = kernel_arg(a.kernel);
  const GridSpec grid{0.0, a.risk_x ? 1.0 : a.t_end, a.points};
  const auto gen = a.risk_x ? make_risk_x_generator(spec, grid) : make_generator(spec, grid);
  const auto batch = draw(*gen, a.paths, g.seed);
  const auto dir = out_dir(g);
  if (a.binary) {
    auto os = open_out(dir / "paths.bin");
    write_binary(batch, os);
    std::cout << (dir / "paths.bin").string() << '\n';
  } else {
    auto os = open_out(dir / "paths.csv");
    write_csv(batch, os);
    std::cout << (dir / "paths.csv").string() << '\n';
  }
  const TrendSpec trend{a.trend_d, a.trend_gamma};
  for (size_t k = 0; k < a.u.size(); ++k) {
    const auto res = sojourn_time(batch, trend, a.u[k], WeightSpec::lebesgue());
    const auto path = dir / ("sojourn_u" + std::to_string(k) + ".csv");
    auto os = open_out(path);
    write_sojourn_csv(res, a.L, os);
    std::cout << path.string() << '\n';
  }
  return 0;
}

// berman

struct BermanArgs {
  std::string kernel;
  double kappa{1};
  bool degenerate{false};
  std::string drift;
  std::vector<double> xs{0};
  std::string horizon{"50"};
  double delta{0.01};
  long paths{100000};
  bool normalized{true};
  bool extrapolate{false};
  bool crude{false};
  double weight_power{-1};
};

BermanQuery berman_query(const Globals& g, const BermanArgs& a) {
  BermanQuery q;
  if (!a.degenerate) q.zeta = a.kernel.empty() ? KernelSpec::fbm(a.kappa) : kernel_arg(a.kernel);
  if (!a.drift.empty()) q.drift = drift_arg(a.drift);
  q.horizon = a.horizon == "inf" ? std::numeric_limits<double>::infinity() : std::stod(a.horizon);
  q.delta = a.delta;
  q.n_paths = a.paths;
  q.seed = g.seed;
  q.normalized = a.normalized;
  q.method = a.crude ? BermanMethod::CRUDE : BermanMethod::SHIFTED;
  if (a.weight_power >= 0) q.weight = WeightSpec::power(a.weight_power);
  q.x = a.xs.front();
  q.validate();
  return q;
}

int berman_estimate(const Globals& g, const BermanArgs& a) {
  Timer t("berman estimate");
  const auto q = berman_query(g, a);
  const auto est = a.extrapolate ? estimate_berman_extrapolated(q, a.xs) : estimate_berman_multi(q, a.xs);
  const auto dir = out_dir(g);
  emit_json(json{{"query", q}, {"xs", a.xs}, {"estimates", est}}, dir / "berman_estimate.json");
  auto os = open_out(dir / "berman_estimate.csv");
  os << "x,value,std_error,T,delta,n_paths,extrapolated,exact\r\n";
  for (const auto& e : est)
    os << format_double(e.x) << ',' << format_double(e.value) << ',' << format_double(e.std_error) << ','
       << format_double(e.horizon) << ',' << format_double(e.delta) << ',' << e.n_paths << ','
       << (e.extrapolated ? 1 : 0) << ',' << (e.exact ? 1 : 0) << "\r\n";
  std::cout << (dir / "berman_estimate.csv").string() << '\n';
  return 0;
}

int berman_table(const Globals& g, const std::vector<double>& kappas, const std::vector<double>& xs,
                 const TableBudget& budget_in) {
  Timer t("berman table");
  TableBudget budget = budget_in;
  budget.seed = g.seed;
  const auto table = build_berman_table(kappas, xs, budget);
  for (const auto& w : table.warnings) std::clog << "lsgp: warning: " << w << '\n';
  const auto dir = out_dir(g);
  save_berman_table(table, (dir / "berman_table.csv").string());
  std::cout << (dir / "berman_table.csv").string() << '\n';
  auto os = open_out(dir / "berman_table.tsv");
  write_berman_tsv(table, os);
  std::cout << (dir / "berman_table.tsv").string() << '\n';
  return 0;
}

int berman_scaling(const Globals& g, const std::string& kernel, double alpha, const std::vector<double>& xs,
                   ScalingOptions opt) {
  Timer t("berman scaling-check");
  const auto spec = kernel.empty() ? KernelSpec::ex31(alpha) : kernel_arg(kernel);
  opt.seed = g.seed;
  const auto rep = check_scaling_identity(spec, xs, opt);
  const auto dir = out_dir(g);
  emit_json(json(rep), dir / "scaling_check.json");
  auto os = open_out(dir / "scaling_check.csv");
  os << "x,lhs,lhs_se,rhs,rhs_se,ratio,z,agree\r\n";
  for (const auto& r : rep.rows)
    os << format_double(r.x) << ',' << format_double(r.lhs.value) << ',' << format_double(r.lhs.std_error) << ','
       << format_double(r.rhs.value) << ',' << format_double(r.rhs.std_error) << ',' << format_double(r.ratio)
       << ',' << format_double(r.z) << ',' << (r.agree ? 1 : 0) << "\r\n";
  std::cout << (dir / "scaling_check.csv").string() << '\n';
  return rep.all_agree() ? 0 : 1;
}

// asymptotics

struct AsymArgs {
  std::string kernel;
  std::string input;  // RegimeInput JSON, instead of a kernel
  double d{0};
  std::optional<double> gamma;
  double L{0};
  std::optional<double> epsilon;
  std::string which;
  std::string table;
  std::string example;
  double berman_delta{0.01};
  long berman_paths{20000};
};

RegimeInput regime_input(const AsymArgs& a) {
  RegimeInput in;
  if (!a.input.empty()) {
    const bool inline_json = a.input.front() == '{';
    const json j = parse_json(inline_json ? a.input : read_file(a.input), "--input");
    try {
      in = j.get<RegimeInput>();
    } catch (const json::exception& e) {
      throw DomainError("regime input: " + std::string(e.what()));
    }
  } else {
    if (a.kernel.empty()) throw DomainError("need --kernel or --input");
    const auto m = meta(kernel_arg(a.kernel));
    in = RegimeInput::from_meta(m, TrendSpec{a.d, a.gamma.value_or(m.beta / 2)}, a.L);
  }
  if (a.epsilon) in.epsilon = a.epsilon;
  in.validate();
  return in;
}

int asymptotics_classify(const Globals& g, const AsymArgs& a) {
  const auto in = regime_input(a);
  const auto regimes = classify(in);
  json j{{"input", in}, {"regimes", regimes}};
  if (regimes.empty()) j["note"] = "no case applies (uncovered)";
  emit_json(j, out_dir(g) / "classify.json");
  return 0;
}

int asymptotics_constant(const Globals& g, const AsymArgs& a) {
  Timer t("asymptotics constant");
  const auto dir = out_dir(g);
  if (!a.example.empty()) {
    const auto spec = kernel_arg(a.kernel);
    const auto ex = example_constant(a.example, spec, a.L, a.d, a.epsilon);
    json j = ex;
    if (!ex.c && ex.query && !ex.needs_table) {
      auto q = *ex.query;
      q.delta = a.berman_delta;
      q.n_paths = a.berman_paths;
      q.seed = g.seed;
      const auto est = estimate_berman(q);
      j["c_estimate"] = est;
    }
    emit_json(j, dir / "constant.json");
    return 0;
  }
  const auto in = regime_input(a);
  const auto regimes = classify(in);
  std::optional<Regime> chosen;
  for (const auto& r : regimes)
    if (a.which.empty() ? r.which == Case::III : a.which == to_string(r.which)) chosen = r;
  if (!chosen && a.which.empty() && !regimes.empty()) chosen = regimes.front();
  if (!chosen) throw DomainError("requested case does not apply to this input");
  ConstantResult c;
  if (chosen->which == Case::III) {
    std::optional<CaseIiiOptions> sampling;
    if (!case_iii_closed_form(in)) {
      if (a.kernel.empty()) throw DomainError("this case-III constant needs sampling; pass --kernel");
      sampling = CaseIiiOptions{kernel_arg(a.kernel), a.berman_delta, a.berman_paths, g.seed};
    }
    c = constant_case_iii(in, sampling);
  } else {
    if (a.table.empty()) throw DomainError("case I/II constants need --table (a saved Berman table)");
    c = constant_case_i_ii(in, *chosen, load_berman_table(a.table));
  }
  chosen->c = c.c;
  chosen->c_error = c.error;
  emit_json(json{{"input", in},
                 {"regime", *chosen},
                 {"c", c.c},
                 {"error", c.error},
                 {"quadrature_error", c.quadrature_error},
                 {"table_error", c.table_error}},
            dir / "constant.json");
  return 0;
}

// ruin / experiment

int run_config_cli(const Globals& g, const std::string& path, std::optional<Estimator> estimator) {
  Timer t("run");
  auto config = load_config(path);
  if (const char* env = std::getenv("LSGP_OUT_DIR"); env && *env) config.out_dir = env;
  if (!g.out_dir.empty()) config.out_dir = g.out_dir;
  if (g.seed_set) config.seed = g.seed;
  if (estimator) config.estimator = *estimator;
  const auto a = run_experiment(config);
  for (const auto& f : a.files) std::cout << f << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sojourn-time ruin probabilities of locally self-similar Gaussian processes"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);
  app.add_option("--out-dir", g.out_dir, "Output directory (overrides LSGP_OUT_DIR and configs)");
  std::function<int()> action;

  auto* kernels = app.add_subcommand("kernels", "Covariance kernels")->require_subcommand(1);
  std::string spec_path;
  double tol_s1 = 1e-10, tol_limits = 0.02;
  auto* kv = kernels->add_subcommand("validate", "Check PSD, S1, S2 and the variance-decay limit");
  kv->add_option("spec", spec_path, "Kernel spec JSON file")->required();
  kv->add_option("--tol-s1", tol_s1)->capture_default_str();
  kv->add_option("--tol-limits", tol_limits)->capture_default_str();
  kv->callback([&] { action = [&] { return kernels_validate(g, spec_path, tol_s1, tol_limits); }; });

  SampleArgs sa;
  auto* smp = app.add_subcommand("sample", "Draw sample paths on a uniform grid");
  smp->add_option("--kernel", sa.kernel, "Kernel spec (JSON file or inline object)")->required();
  smp->add_option("--t-end", sa.t_end)->capture_default_str();
  smp->add_option("--points", sa.points)->capture_default_str();
  smp->add_option("--paths", sa.paths)->capture_default_str();
  smp->add_flag("--risk-x", sa.risk_x, "Sample X(t) = Y(1) - Y(t) on [0, 1]");
  smp->add_flag("--binary", sa.binary, "Write paths.bin instead of paths.csv");
  smp->add_option("--u", sa.u, "Levels for sojourn-time CSVs");
  smp->add_option("--trend-d", sa.trend_d)->capture_default_str();
  smp->add_option("--trend-gamma", sa.trend_gamma)->capture_default_str();
  smp->add_option("--L", sa.L, "Sojourn thresholds for the exceedance columns");
  smp->callback([&] { action = [&] { return sample(g, sa); }; });

  auto* berman = app.add_subcommand("berman", "Berman constants")->require_subcommand(1);
  BermanArgs ba;
  auto* be = berman->add_subcommand("estimate", "Estimate B(x) for one process and drift");
  be->add_option("--kernel", ba.kernel, "Process zeta (default: fBm with --kappa)");
  be->add_option("--kappa", ba.kappa)->capture_default_str();
  be->add_flag("--degenerate", ba.degenerate, "zeta = 0");
  be->add_option("--drift", ba.drift, "coef:exponent,... (default h = 0)");
  be->add_option("--x", ba.xs, "Sojourn levels")->capture_default_str();
  be->add_option("--horizon", ba.horizon, "T or 'inf'")->capture_default_str();
  be->add_option("--delta", ba.delta)->capture_default_str();
  be->add_option("--paths", ba.paths)->capture_default_str();
  be->add_flag("!--raw", ba.normalized, "Do not divide by T");
  be->add_flag("--extrapolate", ba.extrapolate, "Richardson in the spacing");
  be->add_flag("--crude", ba.crude, "Plain estimator instead of the shifted one");
  be->add_option("--weight-power", ba.weight_power, "Weight t^e instead of Lebesgue measure");
  be->callback([&] { action = [&] { return berman_estimate(g, ba); }; });

  std::vector<double> kappas{1.0}, table_xs{0.0, 0.5, 1.0, 2.0, 4.0};
  TableBudget budget;
  bool no_extrap = false;
  auto* bt = berman->add_subcommand("table", "Normalized fBm Berman constants on a grid");
  bt->add_option("--kappas", kappas)->delimiter(',')->capture_default_str();
  bt->add_option("--xs", table_xs)->delimiter(',')->capture_default_str();
  bt->add_option("--horizon", budget.horizon)->capture_default_str();
  bt->add_option("--delta", budget.delta)->capture_default_str();
  bt->add_option("--paths", budget.n_paths)->capture_default_str();
  bt->add_flag("--no-extrapolate", no_extrap);
  bt->callback([&] {
    budget.extrapolate = !no_extrap;
    action = [&] { return berman_table(g, kappas, table_xs, budget); };
  });

  std::string sc_kernel;
  double sc_alpha = 1.5;
  std::vector<double> sc_xs{0.0, 0.5};
  ScalingOptions sc;
  bool sc_plain = false;
  auto* bs = berman->add_subcommand("scaling-check", "Compare B_Y(x) with c^{1/kappa} B_{B_kappa}(c^{1/kappa} x)");
  bs->add_option("--kernel", sc_kernel, "Family with alpha = kappa (default: EX31 with --alpha)");
  bs->add_option("--alpha", sc_alpha)->capture_default_str();
  bs->add_option("--xs", sc_xs)->delimiter(',')->capture_default_str();
  bs->add_option("--horizon", sc.horizon)->capture_default_str();
  bs->add_option("--delta", sc.delta)->capture_default_str();
  bs->add_option("--paths", sc.n_paths)->capture_default_str();
  bs->add_flag("--same-grid", sc_plain, "Run both sides on the same T and delta");
  bs->callback([&] {
    sc.scaled_grid = !sc_plain;
    action = [&] { return berman_scaling(g, sc_kernel, sc_alpha, sc_xs, sc); };
  });

  auto* asym = app.add_subcommand("asymptotics", "Regimes and constants")->require_subcommand(1);
  AsymArgs aa;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--kernel", aa.kernel, "Kernel spec (JSON file or inline object)");
    c->add_option("--input", aa.input, "Regime input JSON instead of a kernel");
    c->add_option("--d", aa.d)->capture_default_str();
    c->add_option("--gamma", aa.gamma, "Trend exponent (default beta / 2)");
    c->add_option("--L", aa.L)->capture_default_str();
    c->add_option("--epsilon", aa.epsilon, "Case II epsilon");
  };
  auto* ac = asym->add_subcommand("classify", "Applicable cases, p and L_u scaling");
  add_common(ac);
  ac->callback([&] { action = [&] { return asymptotics_classify(g, aa); }; });
  auto* ak = asym->add_subcommand("constant", "Constant c of the chosen case");
  add_common(ak);
  ak->add_option("--case", aa.which)->check(CLI::IsMember({"I", "II", "III"}));
  ak->add_option("--table", aa.table, "Saved Berman table for cases I and II");
  ak->add_option("--example", aa.example, "Worked example id (3.1 ... 3.7)");
  ak->add_option("--berman-delta", aa.berman_delta)->capture_default_str();
  ak->add_option("--berman-paths", aa.berman_paths)->capture_default_str();
  ak->callback([&] { action = [&] { return asymptotics_constant(g, aa); }; });

  auto* ruin = app.add_subcommand("ruin", "Ruin probability estimators")->require_subcommand(1);
  std::string ruin_config;
  auto* rc = ruin->add_subcommand("crude", "Plain Monte Carlo over the config's u ladder");
  rc->add_option("config", ruin_config)->required()->check(CLI::ExistingFile);
  rc->callback([&] { action = [&] { return run_config_cli(g, ruin_config, Estimator::CRUDE); }; });
  auto* ri = ruin->add_subcommand("is", "Mean-shift importance sampling");
  ri->add_option("config", ruin_config)->required()->check(CLI::ExistingFile);
  ri->callback([&] { action = [&] { return run_config_cli(g, ruin_config, Estimator::MEANSHIFT_IS); }; });

  auto* exp = app.add_subcommand("experiment", "Config-driven experiments")->require_subcommand(1);
  std::string exp_config;
  auto* er = exp->add_subcommand("run", "Run a config and write report.json, ruin.csv and ratio.tsv");
  er->add_option("config", exp_config)->required()->check(CLI::ExistingFile);
  er->callback([&] { action = [&] { return run_config_cli(g, exp_config, std::nullopt); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  g.seed_set = seed_opt->count() > 0;
  if (g.threads > 0) omp_set_num_threads(g.threads);
  try {
    return action();
  } catch (const DomainError& e) {
    std::cerr << "lsgp: error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "lsgp: numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "lsgp: " << e.what() << '\n';
    return 4;
  }
}
