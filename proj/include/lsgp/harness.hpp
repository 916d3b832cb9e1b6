#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsgp/asymptotics.hpp"
#include "lsgp/berman.hpp"
#include "lsgp/kernels.hpp"
#include "lsgp/sojourn.hpp"

namespace lsgp {

enum class Estimator { CRUDE, MEANSHIFT_IS };
enum class ProcessKind {
  RAW,    ///< Y on [0, T]
  RISK_X  ///< X(t) = Y(1) - Y(t) on [0, 1]
};

struct AsymptoticsConfig {
  bool enabled{true};
  std::optional<Case> which;        ///< default: case III when applicable, else the only case
  std::optional<double> epsilon;    ///< case II
  std::optional<std::string> berman_table;
  std::optional<double> c;          ///< override the constant
  std::optional<double> p;
  std::optional<double> lu_exponent;
  double berman_delta{0.01};        ///< case III constants that need sampling
  long berman_paths{20000};
};

struct ExperimentConfig {
  std::string name{"experiment"};
  KernelSpec kernel;
  ProcessKind process{ProcessKind::RISK_X};
  TrendSpec trend;
  double horizon{1};
  std::vector<double> u_ladder;
  double L{0};
  int n_points{1025};
  /// Also evaluate on every second grid point and extrapolate in the spacing.
  bool refine{true};
  std::optional<double> refine_order;  ///< default kappa / 2
  long n_paths{100000};
  Estimator estimator{Estimator::MEANSHIFT_IS};
  /// Multiplies the mean shift; 0 turns importance sampling into crude sampling.
  double is_shift_scale{1};
  std::uint64_t seed{0};
  std::string out_dir{"out"};
  AsymptoticsConfig asymptotics;

  GridSpec grid() const;
  void validate() const;
};

/// Parses a config document; parse errors name line and column, schema errors name
/// the offending field. `source` labels the messages.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "config");
ExperimentConfig load_config(const std::string& path);

struct Interval {
  double lo{0};
  double hi{0};
};

/// Wilson score interval for k hits in n trials.
Interval wilson_interval(long hits, long n, double z = 1.959963984540054);

struct RuinRow {
  double u{0};
  double l_u{0};
  double estimate{0};
  double std_error{0};
  Interval ci95;
  long n_hits{0};
  double ess{0};               ///< effective number of weighted hits (IS)
  double t_star{0};            ///< IS shift location
  double mu{0};                ///< IS shift size
  std::optional<double> coarse;        ///< estimate on every second grid point
  std::optional<double> extrapolated;  ///< spacing-extrapolated estimate
  double extrapolated_se{0};
  std::optional<double> asymptotic;    ///< c u^p Psi(u)
  std::optional<double> ratio;
  std::optional<Interval> ratio_ci;
  std::optional<double> ratio_coarse;
  std::vector<std::string> flags;
  double runtime_seconds{0};           ///< not persisted
};

struct RunReport {
  ExperimentConfig config;
  Estimator estimator{Estimator::CRUDE};
  std::optional<Regime> regime;
  std::optional<RegimeInput> regime_input;
  std::vector<RuinRow> rows;
  std::vector<std::string> notes;
  /// Ratios move toward 1 along the u ladder, allowing CI overlap.
  std::optional<bool> ratio_trending;
};

RunReport estimate_ruin_crude(const ExperimentConfig& config);
RunReport estimate_ruin_is(const ExperimentConfig& config);
RunReport estimate_ruin(const ExperimentConfig& config);

/// Resolves the regime for a RISK_X config (and its constant where computable).
std::optional<Regime> resolve_regime(const ExperimentConfig& config, std::vector<std::string>* notes = nullptr,
                                     RegimeInput* input_out = nullptr);

/// Adds c u^p Psi(u), p_hat / asymptotic and its CI, and the trend diagnostic.
RunReport run_ratio_experiment(const ExperimentConfig& config, const Regime& regime);

struct Artifacts {
  std::string directory;
  std::vector<std::string> files;
};

/// Runs the config and writes report.json, ruin.csv and ratio.tsv into
/// <out_dir>/<name>/. LSGP_OUT_DIR overrides out_dir.
Artifacts run_config(const std::string& path, std::optional<std::string> out_dir_override = {});
/// Runs an already loaded config into <config.out_dir>/<config.name>/.
Artifacts run_experiment(const ExperimentConfig& config);
Artifacts write_artifacts(const RunReport& report, const std::string& directory);

/// RFC-4180 quoting for one field.
std::string csv_field(const std::string& s);
std::string format_double(double v);

void write_ruin_csv(const RunReport& report, std::ostream& os);
void write_ratio_tsv(const RunReport& report, std::ostream& os);
void write_berman_tsv(const BermanTable& table, std::ostream& os);

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void to_json(nlohmann::json& j, const RuinRow& r);
void to_json(nlohmann::json& j, const RunReport& r);

}  // namespace lsgp
