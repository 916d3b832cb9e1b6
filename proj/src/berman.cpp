#include "lsgp/berman.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "lsgp/errors.hpp"
#include "lsgp/rng.hpp"

namespace lsgp {

Drift& Drift::add(double coef, double exponent) {
  terms.push_back({coef, exponent});
  return *this;
}

double Drift::operator()(double t) const {
  double h = 0;
  for (const auto& term : terms)
    if (term.coef != 0) h += term.coef * std::pow(t, term.exponent);
  return h;
}

bool Drift::nondecreasing() const {
  return std::all_of(terms.begin(), terms.end(),
                     [](const DriftTerm& d) { return d.coef >= 0 && d.exponent > 0; });
}

bool Drift::unbounded() const {
  return nondecreasing() &&
         std::any_of(terms.begin(), terms.end(), [](const DriftTerm& d) { return d.coef > 0; });
}

void BermanQuery::validate() const {
  if (zeta) lsgp::validate(*zeta);
  weight.validate();
  for (const auto& t : drift.terms)
    if (!std::isfinite(t.coef) || !(t.exponent > 0) || !std::isfinite(t.exponent))
      throw DomainError("drift terms need finite coefficients and positive exponents");
  if (!(x >= 0) || !std::isfinite(x)) throw DomainError("Berman query: x must be finite and >= 0");
  if (!(horizon > 0)) throw DomainError("Berman query: horizon must be > 0");
  if (!(delta > 0) || !std::isfinite(delta)) throw DomainError("Berman query: delta must be > 0");
  if (std::isfinite(horizon) && delta > horizon)
    throw DomainError("Berman query: delta exceeds the horizon");
  if (n_paths < 1) throw DomainError("Berman query: n_paths must be >= 1");
}

namespace {

// Finds y* for one path; keeps scratch storage between calls.
class CriticalLevel {
 public:
  double operator()(const double* f, Eigen::Index n, double x, const double* w, bool uniform) {
    if (x == 0) return -*std::max_element(f, f + n);
    if (uniform) {
      // Equal weights: the k-th largest value decides.
      const double cell = w[0];
      auto k = static_cast<Eigen::Index>(std::floor(x / cell)) + 1;
      while (k > 1 && static_cast<double>(k - 1) * cell > x) --k;
      while (static_cast<double>(k) * cell <= x) ++k;
      if (k > n) throw DomainError("critical_level: x must be below the total weight");
      buffer_.assign(f, f + n);
      std::nth_element(buffer_.begin(), buffer_.begin() + (k - 1), buffer_.end(), std::greater<>());
      return -buffer_[k - 1];
    }
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    std::sort(order_.begin(), order_.end(), [f](Eigen::Index a, Eigen::Index b) { return f[a] > f[b]; });
    double cumulative = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
      cumulative += w[order_[k]];
      if (cumulative > x) return -f[order_[k]];
    }
    throw DomainError("critical_level: x must be below the total weight");
  }

 private:
  std::vector<double> buffer_;
  std::vector<Eigen::Index> order_;
};

bool is_uniform(const Eigen::VectorXd& w) {
  return w.size() > 0 && w.maxCoeff() - w.minCoeff() <= 1e-12 * w.maxCoeff();
}

double log_sum_exp(const Eigen::VectorXd& logs) {
  const double m = logs.maxCoeff();
  return m + std::log((logs.array() - m).exp().sum());
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

struct LevelLayout {
  int stride;
  double horizon;
  Eigen::Index n_cells;  // coarse cells
  Eigen::VectorXd weights;
  bool uniform;
};

double summary_mean(const Eigen::VectorXd& v) { return v.mean(); }

double summary_se(const Eigen::VectorXd& v) {
  const auto n = v.size();
  if (n < 2) return 0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(n - 1) / static_cast<double>(n));
}

// Exact value for zeta = 0 with nondecreasing drift: {t : h(t) < y} is an interval
// [0, s) whose measure exceeds x iff s exceeds s*(x).
double deterministic_exact(const BermanQuery& q, double x, double horizon) {
  const double s = q.weight.kind == WeightKind::LEBESGUE
                       ? x
                       : std::pow((q.weight.exponent + 1) * x, 1 / (q.weight.exponent + 1));
  if (!(q.weight.mass(0, horizon) > x))
    throw DomainError("Berman query: x must be below the measure of [0, horizon]");
  return std::exp(-q.drift(s));
}

}  // namespace

double critical_level(const Eigen::Ref<const Eigen::VectorXd>& f, double x,
                      const Eigen::Ref<const Eigen::VectorXd>& weights) {
  if (f.size() != weights.size() || f.size() == 0)
    throw DomainError("critical_level: f and weights must have the same nonzero length");
  if (!(x >= 0)) throw DomainError("critical_level: x must be >= 0");
  if (x >= weights.sum()) throw DomainError("critical_level: x must be below the total weight");
  CriticalLevel solver;
  const Eigen::VectorXd w = weights;
  const Eigen::VectorXd values = f;
  return solver(values.data(), values.size(), x, w.data(), false);
}

double truncation_horizon(const BermanQuery& q) {
  if (!q.drift.unbounded())
    throw DomainError("infinite horizon needs a nondecreasing, unbounded drift");
  std::optional<Kernel> k;
  if (q.zeta) k.emplace(*q.zeta);
  for (double t = 1; t < 1e12; t *= 2) {
    const double h = q.drift(t);
    if (h < 40) continue;
    if (!k) return t;
    const double var = (*k)(t, t);
    if ((var + h) / std::sqrt(2 * var) >= 9) return t;
  }
  throw DomainError("could not find a truncation point for the infinite horizon");
}

BermanEstimate BermanSamples::estimate(int level, int k) const {
  std::vector<double> coef(levels.size(), 0.0);
  coef[level] = 1;
  auto e = combine(coef, k);
  e.extrapolated = false;
  e.delta = query.delta * levels[level].stride;
  e.horizon = levels[level].horizon;
  return e;
}

BermanEstimate BermanSamples::combine(std::span<const double> coef, int k) const {
  if (coef.size() != levels.size()) throw DomainError("combine: one coefficient per level");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(samples.rows());
  for (size_t l = 0; l < levels.size(); ++l)
    if (coef[l] != 0) v += coef[l] * samples.col(column(static_cast<int>(l), k));
  BermanEstimate e;
  e.value = summary_mean(v);
  e.std_error = query.zeta ? summary_se(v) : 0.0;
  e.horizon = levels[0].horizon;
  e.delta = query.delta * levels[0].stride;
  e.n_paths = query.zeta ? query.n_paths : 0;
  e.x = xs[k];
  e.normalized = query.normalized;
  e.extrapolated = true;
  e.exact = !query.zeta;
  e.upper_bound = upper_bound;
  e.method = query.zeta ? (query.method == BermanMethod::SHIFTED ? "SHIFTED" : "CRUDE") : "EXACT";
  return e;
}

BermanSamples sample_berman(const BermanQuery& q, std::span<const double> xs,
                            std::span<const BermanLevel> levels) {
  q.validate();
  if (xs.empty() || levels.empty()) throw DomainError("sample_berman: need at least one x and one level");
  BermanSamples out;
  out.query = q;
  out.xs.assign(xs.begin(), xs.end());

  const double t_cut = std::isfinite(q.horizon) ? q.horizon : truncation_horizon(q);
  out.t_cut = t_cut;
  int stride_lcm = 1;
  for (const auto& l : levels) {
    if (l.stride < 1) throw DomainError("sample_berman: strides must be >= 1");
    stride_lcm = std::lcm(stride_lcm, l.stride);
  }
  long cells = std::max(1L, std::lround(t_cut / q.delta));
  cells = ((cells + stride_lcm - 1) / stride_lcm) * stride_lcm;
  const double horizon = static_cast<double>(cells) * q.delta;
  const GridSpec grid{0.0, horizon, static_cast<int>(cells + 1)};
  out.query.horizon = horizon;

  std::vector<LevelLayout> layout;
  for (const auto& l : levels) {
    const double h = l.horizon > 0 ? std::min(l.horizon, horizon) : horizon;
    const long end = (std::lround(h / q.delta) / l.stride) * l.stride;  // last fine point index
    if (end < l.stride) throw DomainError("sample_berman: level horizon shorter than one cell");
    LevelLayout lay{l.stride, static_cast<double>(end) * q.delta, end / l.stride, {}, false};
    lay.weights.resize(lay.n_cells);
    for (Eigen::Index c = 0; c < lay.n_cells; ++c)
      lay.weights(c) = q.weight.mass(grid.point(static_cast<int>(c * l.stride)),
                                     grid.point(static_cast<int>((c + 1) * l.stride)));
    lay.uniform = q.weight.kind == WeightKind::LEBESGUE && is_uniform(lay.weights);
    for (double x : xs)
      if (!(x >= 0) || x >= lay.weights.sum())
        throw DomainError("Berman query: x must lie in [0, measure of the horizon)");
    layout.push_back(std::move(lay));
    out.levels.push_back({l.stride, layout.back().horizon});
  }
  const auto nx = static_cast<Eigen::Index>(xs.size());
  const auto ncols = static_cast<Eigen::Index>(layout.size()) * nx;

  // zeta = 0: one deterministic row.
  if (!q.zeta) {
    out.samples.resize(1, ncols);
    CriticalLevel solver;
    const bool analytic = q.drift.nondecreasing();
    for (size_t l = 0; l < layout.size(); ++l) {
      const auto& lay = layout[l];
      Eigen::VectorXd f(lay.n_cells);
      for (Eigen::Index c = 0; c < lay.n_cells; ++c) f(c) = -q.drift(grid.point(static_cast<int>(c * lay.stride)));
      for (Eigen::Index k = 0; k < nx; ++k) {
        double v = analytic ? deterministic_exact(q, xs[k], lay.horizon)
                            : std::exp(-solver(f.data(), f.size(), xs[k], lay.weights.data(), lay.uniform));
        if (q.normalized) v /= lay.horizon;
        out.samples(0, static_cast<Eigen::Index>(l) * nx + k) = v;
      }
    }
    out.upper_bound = out.samples.maxCoeff();
    return out;
  }

  const auto gen = make_generator(*q.zeta, grid);
  const Eigen::Index n_cells = cells;
  const Eigen::VectorXd w = cell_weights(grid, q.weight);
  const Eigen::VectorXd var = gen->variances();
  Eigen::VectorXd h(n_cells);
  for (Eigen::Index i = 0; i < n_cells; ++i) h(i) = q.drift(grid.point(static_cast<int>(i)));

  const bool shifted = q.method == BermanMethod::SHIFTED;
  // Cell j is chosen with probability w_j exp(-h_j) / M.
  const Eigen::VectorXd log_w = w.array().log();
  const Eigen::VectorXd log_mass = log_w - h;
  const double log_m = log_sum_exp(log_mass);
  std::vector<double> cdf(n_cells);
  {
    double acc = 0;
    for (Eigen::Index j = 0; j < n_cells; ++j) cdf[j] = acc += std::exp(log_mass(j) - log_m);
  }
  double min_h = layout[0].horizon;
  for (const auto& lay : layout) min_h = std::min(min_h, lay.horizon);
  out.upper_bound = shifted ? std::exp(log_m) / w.minCoeff() / (q.normalized ? min_h : 1.0)
                            : std::numeric_limits<double>::infinity();

  out.samples.resize(q.n_paths, ncols);
  const double sqrt2 = std::sqrt(2.0);
#pragma omp parallel
  {
    CriticalLevel solver;
    Eigen::VectorXd f(n_cells), coarse;
    Eigen::MatrixXd buffer(gen->size(), PathGenerator::kBlock);
    const long blocks = (q.n_paths + PathGenerator::kBlock - 1) / PathGenerator::kBlock;
#pragma omp for schedule(dynamic, 1)
    for (long b = 0; b < blocks; ++b) {
      const long first = b * PathGenerator::kBlock;
      gen->generate_block(q.seed, first, buffer);
      const long last = std::min(q.n_paths, first + PathGenerator::kBlock);
      for (long p = first; p < last; ++p) {
        const auto zeta = buffer.col(p - first);
        double log_lambda = 0;
        if (shifted) {
          auto rng = substream(q.seed, kIndexStream, static_cast<std::uint64_t>(p));
          const double u = uniform01(rng) * cdf.back();
          const auto j = static_cast<int>(std::min<std::ptrdiff_t>(
              std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), n_cells - 1));
          const Eigen::VectorXd col = gen->covariance_column(j);
          f = sqrt2 * zeta.head(n_cells) + 2 * col.head(n_cells) - var.head(n_cells) - h;
          log_lambda = log_sum_exp(log_w + f);
        } else {
          f = sqrt2 * zeta.head(n_cells) - var.head(n_cells) - h;
        }
        for (size_t l = 0; l < layout.size(); ++l) {
          const auto& lay = layout[l];
          const double* fp = f.data();
          if (lay.stride != 1 || lay.n_cells != n_cells) {
            coarse.resize(lay.n_cells);
            for (Eigen::Index c = 0; c < lay.n_cells; ++c) coarse(c) = f(c * lay.stride);
            fp = coarse.data();
          }
          const double scale = q.normalized ? 1.0 / lay.horizon : 1.0;
          for (Eigen::Index k = 0; k < nx; ++k) {
            const double y = solver(fp, lay.n_cells, xs[k], lay.weights.data(), lay.uniform);
            const double v = shifted ? std::exp(log_m - y - log_lambda) : std::exp(-y);
            out.samples(p, static_cast<Eigen::Index>(l) * nx + k) = v * scale;
          }
        }
      }
    }
  }
  return out;
}

BermanEstimate estimate_berman(const BermanQuery& q) {
  const double xs[] = {q.x};
  return estimate_berman_multi(q, xs).front();
}

std::vector<BermanEstimate> estimate_berman_multi(const BermanQuery& q, std::span<const double> xs) {
  const BermanLevel full[] = {{1, 0}};
  const auto s = sample_berman(q, xs, full);
  std::vector<BermanEstimate> out;
  for (int k = 0; k < static_cast<int>(xs.size()); ++k) out.push_back(s.estimate(0, k));
  return out;
}

double richardson(double fine, double coarse, double ratio, double order) {
  const double rp = std::pow(ratio, order);
  return (fine - rp * coarse) / (1 - rp);
}

std::vector<BermanEstimate> estimate_berman_extrapolated(const BermanQuery& q, std::span<const double> xs) {
  if (!q.zeta) return estimate_berman_multi(q, xs);
  const double order = meta(*q.zeta).kappa / 2;
  const BermanLevel levels[] = {{1, 0}, {2, 0}};
  const auto s = sample_berman(q, xs, levels);
  const double rp = std::pow(0.5, order);
  const double coef[] = {1 / (1 - rp), -rp / (1 - rp)};
  std::vector<BermanEstimate> out;
  for (int k = 0; k < static_cast<int>(xs.size()); ++k) out.push_back(s.combine(coef, k));
  return out;
}

bool ScalingReport::all_agree() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const ScalingRow& r) { return r.agree; });
}

ScalingReport check_scaling_identity(const KernelSpec& spec, std::span<const double> xs,
                                     const ScalingOptions& options) {
  const auto m = meta(spec);
  if (std::abs(m.alpha - m.kappa) > 1e-12)
    throw DomainError("scaling identity needs a family with alpha = kappa");
  ScalingReport report;
  report.spec = spec;
  report.kappa = m.kappa;
  report.c_y = m.c_y;
  report.options = options;
  const double s = std::pow(m.c_y, 1 / m.kappa);

  BermanQuery lhs_q;
  lhs_q.zeta = spec;
  lhs_q.horizon = options.horizon;
  lhs_q.delta = options.delta;
  lhs_q.n_paths = options.n_paths;
  lhs_q.seed = splitmix64(options.seed ^ 0x1111);
  lhs_q.normalized = true;
  const auto lhs = estimate_berman_multi(lhs_q, xs);

  BermanQuery rhs_q = lhs_q;
  rhs_q.zeta = KernelSpec::fbm(m.kappa);
  rhs_q.seed = splitmix64(options.seed ^ 0x2222);
  if (options.scaled_grid) {
    rhs_q.horizon = s * options.horizon;
    rhs_q.delta = s * options.delta;
  }
  std::vector<double> scaled_x;
  for (double x : xs) scaled_x.push_back(s * x);
  const auto rhs = estimate_berman_multi(rhs_q, scaled_x);

  for (size_t k = 0; k < xs.size(); ++k) {
    ScalingRow row;
    row.x = xs[k];
    row.lhs = lhs[k];
    row.rhs = rhs[k];
    row.rhs.value *= s;
    row.rhs.std_error *= s;
    row.ratio = row.lhs.value / row.rhs.value;
    row.combined_se = std::hypot(row.lhs.std_error, row.rhs.std_error);
    row.z = (row.lhs.value - row.rhs.value) / row.combined_se;
    row.agree = std::abs(row.z) <= 2;
    report.rows.push_back(row);
  }
  return report;
}

std::vector<double> BermanTable::kappas() const {
  std::vector<double> k;
  for (const auto& e : entries)
    if (std::find(k.begin(), k.end(), e.kappa) == k.end()) k.push_back(e.kappa);
  return k;
}

std::vector<BermanTableEntry> BermanTable::column(double kappa) const {
  std::vector<BermanTableEntry> col;
  for (const auto& e : entries)
    if (std::abs(e.kappa - kappa) <= 1e-12) col.push_back(e);
  if (col.empty()) {
    std::ostringstream os;
    os << "Berman table has no column for kappa = " << kappa;
    throw DomainError(os.str());
  }
  std::sort(col.begin(), col.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
  return col;
}

BermanTable build_berman_table(std::span<const double> kappas, std::span<const double> xs,
                               const TableBudget& budget) {
  if (kappas.empty() || xs.empty()) throw DomainError("Berman table needs kappas and x values");
  std::vector<double> grid(xs.begin(), xs.end());
  std::sort(grid.begin(), grid.end());
  if (grid.front() != 0) throw DomainError("Berman table x grid must start at 0");
  BermanTable table;
  table.budget = budget;
  for (size_t i = 0; i < kappas.size(); ++i) {
    BermanQuery q;
    q.zeta = KernelSpec::fbm(kappas[i]);
    q.horizon = budget.horizon;
    q.delta = budget.delta;
    q.n_paths = budget.n_paths;
    q.seed = splitmix64(budget.seed + i);
    q.normalized = true;
    const auto est = budget.extrapolate ? estimate_berman_extrapolated(q, grid) : estimate_berman_multi(q, grid);
    for (size_t k = 0; k < grid.size(); ++k) {
      BermanTableEntry e{kappas[i], grid[k], est[k].value, est[k].std_error, est[k].horizon,
                         est[k].delta, est[k].n_paths, est[k].extrapolated, false};
      if (k > 0) {
        const auto& prev = table.entries.back();
        if (e.value - prev.value > 2 * std::hypot(e.std_error, prev.std_error)) {
          e.monotone_flag = true;
          std::ostringstream os;
          os << "kappa=" << e.kappa << ": value at x=" << e.x
             << " exceeds its left neighbour beyond 2 SE; budget too small to resolve monotonicity";
          table.warnings.push_back(os.str());
        }
      }
      if (e.value <= 0) {
        std::ostringstream os;
        os << "kappa=" << e.kappa << ": nonpositive estimate at x=" << e.x;
        table.warnings.push_back(os.str());
      }
      table.entries.push_back(e);
    }
  }
  return table;
}

void write_berman_table_csv(const BermanTable& table, std::ostream& os) {
  os << "kappa,x,value,std_error,T,delta,n_paths,extrapolated\r\n";
  char buf[256];
  for (const auto& e : table.entries) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%ld,%d\r\n", e.kappa, e.x, e.value,
                  e.std_error, e.horizon, e.delta, e.n_paths, e.extrapolated ? 1 : 0);
    os << buf;
  }
}

BermanTable read_berman_table_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DomainError("Berman table: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "kappa,x,value,std_error,T,delta,n_paths,extrapolated")
    throw DomainError("Berman table: unexpected header '" + line + "'");
  BermanTable table;
  int row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw DomainError("Berman table: row " + std::to_string(row) + " needs 8 fields");
    try {
      BermanTableEntry e;
      e.kappa = std::stod(cells[0]);
      e.x = std::stod(cells[1]);
      e.value = std::stod(cells[2]);
      e.std_error = std::stod(cells[3]);
      e.horizon = std::stod(cells[4]);
      e.delta = std::stod(cells[5]);
      e.n_paths = std::stol(cells[6]);
      e.extrapolated = cells[7] == "1";
      table.entries.push_back(e);
    } catch (const std::logic_error&) {
      throw DomainError("Berman table: row " + std::to_string(row) + " has a non-numeric field");
    }
  }
  return table;
}

void save_berman_table(const BermanTable& table, const std::string& path) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DomainError("cannot write " + path);
    write_berman_table_csv(table, os);
  }
  nlohmann::json flags = nlohmann::json::array();
  for (const auto& e : table.entries)
    if (e.monotone_flag) flags.push_back({{"kappa", e.kappa}, {"x", e.x}});
  nlohmann::json meta{{"budget",
                       {{"T", table.budget.horizon},
                        {"delta", table.budget.delta},
                        {"n_paths", table.budget.n_paths},
                        {"seed", table.budget.seed},
                        {"extrapolate", table.budget.extrapolate}}},
                      {"warnings", table.warnings},
                      {"monotonicity_flags", flags},
                      {"columns", {"kappa", "x", "value", "std_error", "T", "delta", "n_paths", "extrapolated"}}};
  std::ofstream js(path + ".json", std::ios::binary);
  js << meta.dump(2) << '\n';
}

BermanTable load_berman_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DomainError("cannot read Berman table " + path);
  auto table = read_berman_table_csv(is);
  std::ifstream js(path + ".json");
  if (js) {
    const auto meta = nlohmann::json::parse(js);
    if (meta.contains("budget")) {
      const auto& b = meta["budget"];
      table.budget.horizon = b.value("T", table.budget.horizon);
      table.budget.delta = b.value("delta", table.budget.delta);
      table.budget.n_paths = b.value("n_paths", table.budget.n_paths);
      table.budget.seed = b.value("seed", table.budget.seed);
      table.budget.extrapolate = b.value("extrapolate", table.budget.extrapolate);
    }
    table.warnings = meta.value("warnings", std::vector<std::string>{});
    for (const auto& f : meta.value("monotonicity_flags", nlohmann::json::array()))
      for (auto& e : table.entries)
        if (e.kappa == f.at("kappa").get<double>() && e.x == f.at("x").get<double>()) e.monotone_flag = true;
  }
  return table;
}

void to_json(nlohmann::json& j, const Drift& d) {
  j = nlohmann::json::array();
  for (const auto& t : d.terms) j.push_back({{"coef", t.coef}, {"exponent", t.exponent}});
}

void from_json(const nlohmann::json& j, Drift& d) {
  const auto& list = j.is_object() ? j.at("terms") : j;
  if (!list.is_array()) throw DomainError("drift must be a list of {coef, exponent} terms");
  d.terms.clear();
  for (const auto& t : list) d.add(t.at("coef").get<double>(), t.at("exponent").get<double>());
}

void to_json(nlohmann::json& j, const BermanQuery& q) {
  j = {{"zeta", q.zeta ? nlohmann::json(*q.zeta) : nlohmann::json(nullptr)},
       {"drift", q.drift},
       {"x", q.x},
       {"horizon", std::isfinite(q.horizon) ? nlohmann::json(q.horizon) : nlohmann::json("inf")},
       {"weight", q.weight},
       {"delta", q.delta},
       {"n_paths", q.n_paths},
       {"seed", q.seed},
       {"normalized", q.normalized},
       {"method", q.method == BermanMethod::SHIFTED ? "SHIFTED" : "CRUDE"}};
}

void from_json(const nlohmann::json& j, BermanQuery& q) {
  q = BermanQuery{};
  if (j.contains("zeta") && !j["zeta"].is_null()) {
    const auto& z = j["zeta"];
    if (z.is_string() && z.get<std::string>() == "DEGENERATE_ZERO")
      q.zeta.reset();
    else
      q.zeta = z.get<KernelSpec>();
  }
  if (j.contains("drift")) q.drift = j["drift"].get<Drift>();
  q.x = j.value("x", 0.0);
  if (j.contains("horizon")) {
    const auto& h = j["horizon"];
    q.horizon = h.is_string() && (h.get<std::string>() == "inf" || h.get<std::string>() == "infinity")
                    ? std::numeric_limits<double>::infinity()
                    : h.get<double>();
  }
  if (j.contains("weight")) q.weight = j["weight"].get<WeightSpec>();
  q.delta = j.value("delta", q.delta);
  q.n_paths = j.value("n_paths", q.n_paths);
  q.seed = j.value("seed", q.seed);
  q.normalized = j.value("normalized", q.normalized);
  const auto method = j.value("method", std::string("SHIFTED"));
  if (method == "SHIFTED")
    q.method = BermanMethod::SHIFTED;
  else if (method == "CRUDE")
    q.method = BermanMethod::CRUDE;
  else
    throw DomainError("Berman method must be SHIFTED or CRUDE, got " + method);
  q.validate();
}

void to_json(nlohmann::json& j, const BermanEstimate& e) {
  j = {{"value", e.value},         {"std_error", e.std_error}, {"T", e.horizon},
       {"delta", e.delta},         {"n_paths", e.n_paths},     {"x", e.x},
       {"normalized", e.normalized}, {"extrapolated", e.extrapolated}, {"exact", e.exact},
       {"method", e.method}};
  j["upper_bound"] = std::isfinite(e.upper_bound) ? nlohmann::json(e.upper_bound) : nlohmann::json(nullptr);
}

void to_json(nlohmann::json& j, const ScalingReport& r) {
  j = {{"spec", r.spec},
       {"kappa", r.kappa},
       {"c_y", r.c_y},
       {"T", r.options.horizon},
       {"delta", r.options.delta},
       {"n_paths", r.options.n_paths},
       {"seed", r.options.seed},
       {"scaled_grid", r.options.scaled_grid},
       {"all_agree", r.all_agree()}};
  auto rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"x", row.x},
                    {"lhs", row.lhs},
                    {"rhs", row.rhs},
                    {"ratio", row.ratio},
                    {"combined_se", row.combined_se},
                    {"z", row.z},
                    {"agree", row.agree}});
  j["rows"] = rows;
}

}  // namespace lsgp
