#include "lsgp/sampler.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <iostream>
#include <sstream>

#include "lsgp/errors.hpp"
#include "lsgp/rng.hpp"

namespace lsgp {

Eigen::VectorXd GridSpec::points() const {
  Eigen::VectorXd p(n_points);
  for (int i = 0; i < n_points; ++i) p(i) = point(i);
  return p;
}

void GridSpec::validate() const {
  if (!(t_start >= 0) || !std::isfinite(t_end) || !(t_end > t_start) || n_points < 2) {
    std::ostringstream os;
    os << "invalid grid [" << t_start << ", " << t_end << "] with " << n_points << " points";
    throw DomainError(os.str());
  }
}

GridSpec grid_with_spacing(double t_start, double t_end, double spacing) {
  if (!(spacing > 0)) throw DomainError("grid spacing must be positive");
  const long cells = std::max(1L, std::lround((t_end - t_start) / spacing));
  GridSpec g{t_start, t_end, static_cast<int>(cells + 1)};
  g.validate();
  return g;
}

Eigen::MatrixXd build_gram(const KernelSpec& spec, const GridSpec& grid) {
  grid.validate();
  const Eigen::VectorXd p = grid.points();
  return build_gram(spec, std::span<const double>(p.data(), p.size()));
}

Eigen::MatrixXd build_gram(const KernelSpec& spec, std::span<const double> points) {
  const Kernel k(spec);
  const auto n = static_cast<Eigen::Index>(points.size());
  std::vector<double> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw DomainError("build_gram: grid points must be distinct");
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double v = k(points[i], points[j]);
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  return gram;
}

double Factorization::covariance(int i, int j) const {
  const double base = gram(i, j);
  if (i != j || jitter_used == 0) return base;
  return gram(i, i) > 0 ? base + jitter_used : base;
}

Eigen::MatrixXd Factorization::reconstructed() const {
  const Eigen::Index n = gram.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  const Eigen::MatrixXd llt = root * root.transpose();
  for (size_t a = 0; a < active.size(); ++a)
    for (size_t b = 0; b < active.size(); ++b) out(active[a], active[b]) = llt(a, b);
  return out;
}

Factorization factorize(const Eigen::MatrixXd& gram, std::optional<GridSpec> grid) {
  if (gram.rows() != gram.cols() || gram.rows() == 0)
    throw DomainError("factorize: Gram matrix must be square and nonempty");
  if (!gram.isApprox(gram.transpose(), 1e-12) && (gram - gram.transpose()).norm() > 1e-14)
    throw DomainError("factorize: Gram matrix must be symmetric");
  Factorization f;
  f.grid = grid;
  f.gram = gram;
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    if (gram(i, i) > 0)
      f.active.push_back(static_cast<int>(i));
    else if (gram(i, i) < 0 || gram.row(i).cwiseAbs().maxCoeff() > 0)
      throw DomainError("factorize: zero-variance row with nonzero covariance");
  }
  const auto m = static_cast<Eigen::Index>(f.active.size());
  Eigen::MatrixXd sub(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = gram(f.active[a], f.active[b]);
  if (m == 0) return f;

  Eigen::LLT<Eigen::MatrixXd> llt(sub);
  if (llt.info() == Eigen::Success) {
    f.root = llt.matrixL();
    return f;
  }
  const double base = sub.trace() / static_cast<double>(m);
  for (double scale = 1e-12; scale <= 1.0000001e-6; scale *= 10) {
    const double jitter = scale * base;
    Eigen::MatrixXd shifted = sub;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) {
      f.root = llt.matrixL();
      f.jitter_used = jitter;
      return f;
    }
  }
  Eigen::MatrixXd shifted = sub;
  shifted.diagonal().array() += 1e-6 * base;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(shifted);
  Eigen::Index worst = 0;
  const double pivot = ldlt.vectorD().minCoeff(&worst);
  std::ostringstream os;
  os << "factorize: matrix indefinite after maximal jitter; worst pivot " << pivot
     << " at permuted index " << worst;
  throw NumericError(os.str(), pivot);
}

const char* to_string(Construction c) {
  switch (c) {
    case Construction::RAW_Y:
      return "RAW_Y";
    case Construction::RISK_X:
      return "RISK_X";
    case Construction::FBM_FAST:
      return "FBM_FAST";
  }
  return "UNKNOWN";
}

Eigen::VectorXd PathGenerator::covariance_column(int j) const {
  Eigen::VectorXd c(size());
  for (int i = 0; i < size(); ++i) c(i) = covariance(i, j);
  return c;
}

Eigen::VectorXd PathGenerator::variances() const {
  Eigen::VectorXd v(size());
  for (int i = 0; i < size(); ++i) v(i) = covariance(i, i);
  return v;
}

namespace {

void fill_normals(std::mt19937_64& rng, double* out, Eigen::Index n) {
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal(rng);
}

class DenseGenerator final : public PathGenerator {
 public:
  DenseGenerator(Factorization f, Construction c)
      : PathGenerator(*f.grid, c), fact_(std::move(f)) {}

  double covariance(int i, int j) const override { return fact_.covariance(i, j); }

  Eigen::VectorXd covariance_column(int j) const override {
    Eigen::VectorXd c = fact_.gram.col(j);
    if (fact_.gram(j, j) > 0) c(j) += fact_.jitter_used;
    return c;
  }

  void generate_block(std::uint64_t seed, long first, Eigen::Ref<Eigen::MatrixXd> out) const override {
    const auto m = static_cast<Eigen::Index>(fact_.active.size());
    Eigen::MatrixXd z(m, kBlock);
    for (int c = 0; c < kBlock; ++c) {
      auto rng = substream(seed, kPathStream, static_cast<std::uint64_t>(first + c));
      fill_normals(rng, z.col(c).data(), m);
    }
    out.setZero();
    if (m == 0) return;
    const Eigen::MatrixXd y = fact_.root.triangularView<Eigen::Lower>() * z;
    for (Eigen::Index a = 0; a < m; ++a) out.row(fact_.active[a]) = y.row(a);
  }

  const Factorization& factorization() const { return fact_; }

 private:
  Factorization fact_;
};

// fBm on t_i = i * delta. Increments have autocovariance
// g(k) = delta^kappa (|k+1|^kappa + |k-1|^kappa - 2|k|^kappa) / 2; the circulant of size
// 2N' (N' >= N a power of two) embeds their Toeplitz covariance.
class FbmFastGenerator final : public PathGenerator {
 public:
  FbmFastGenerator(double kappa, const GridSpec& grid, Eigen::VectorXd sqrt_eigen)
      : PathGenerator(grid, Construction::FBM_FAST), kappa_(kappa), sqrt_eigen_(std::move(sqrt_eigen)),
        lag_power_(grid.n_points) {
    for (int k = 0; k < grid.n_points; ++k) lag_power_(k) = std::pow(grid.point(k), kappa);
  }

  // Grid starts at 0 and is uniform, so |t_i - t_j|^kappa is a lag lookup.
  double covariance(int i, int j) const override {
    return (lag_power_(i) + lag_power_(j) - lag_power_(std::abs(i - j))) / 2;
  }

  Eigen::VectorXd covariance_column(int j) const override {
    Eigen::VectorXd c(size());
    for (int i = 0; i < size(); ++i) c(i) = (lag_power_(i) + lag_power_(j) - lag_power_(std::abs(i - j))) / 2;
    return c;
  }

  void generate_block(std::uint64_t seed, long first, Eigen::Ref<Eigen::MatrixXd> out) const override {
    const int n = size();
    const double delta = grid().spacing();
    out.row(0).setZero();
    if (kappa_ == 2.0) {
      for (int c = 0; c < kBlock; ++c) {
        auto rng = substream(seed, kPathStream, static_cast<std::uint64_t>(first + c));
        const double z = std::normal_distribution<double>()(rng);
        for (int i = 1; i < n; ++i) out(i, c) = grid().point(i) * z;
      }
      return;
    }
    if (kappa_ == 1.0) {
      const double sd = std::sqrt(delta);
      std::vector<double> z(n - 1);
      for (int c = 0; c < kBlock; ++c) {
        auto rng = substream(seed, kPathStream, static_cast<std::uint64_t>(first + c));
        fill_normals(rng, z.data(), n - 1);
        double acc = 0;
        for (int i = 1; i < n; ++i) {
          acc += sd * z[i - 1];
          out(i, c) = acc;
        }
      }
      return;
    }
    // One complex transform yields two independent paths (real and imaginary parts);
    // paths 2k and 2k + 1 share substream k.
    const auto size_m = sqrt_eigen_.size();
    std::vector<std::complex<double>> in(size_m), res(size_m);
    Eigen::FFT<double> fft;
    std::normal_distribution<double> normal;
    for (int c = 0; c < kBlock; c += 2) {
      auto rng = substream(seed, kPathStream, static_cast<std::uint64_t>((first + c) / 2));
      for (Eigen::Index k = 0; k < size_m; ++k) {
        const double re = normal(rng);
        const double im = normal(rng);
        in[k] = sqrt_eigen_(k) * std::complex<double>(re, im);
      }
      fft.fwd(res, in);
      double acc_re = 0, acc_im = 0;
      for (int i = 1; i < n; ++i) {
        acc_re += res[i - 1].real();
        acc_im += res[i - 1].imag();
        out(i, c) = acc_re;
        out(i, c + 1) = acc_im;
      }
    }
  }

 private:
  double kappa_;
  Eigen::VectorXd sqrt_eigen_;  // sqrt(lambda_k / M)
  Eigen::VectorXd lag_power_;   // t_k^kappa
};

class RiskXGenerator final : public PathGenerator {
 public:
  explicit RiskXGenerator(Factorization f)
      : PathGenerator(*f.grid, Construction::RISK_X), y_(std::move(f), Construction::RAW_Y) {}

  double covariance(int i, int j) const override {
    const int last = size() - 1;
    return y_.covariance(last, last) - y_.covariance(i, last) - y_.covariance(last, j) +
           y_.covariance(i, j);
  }

  void generate_block(std::uint64_t seed, long first, Eigen::Ref<Eigen::MatrixXd> out) const override {
    y_.generate_block(seed, first, out);
    const int last = size() - 1;
    for (int c = 0; c < kBlock; ++c) {
      const double y1 = out(last, c);
      for (int i = 0; i < size(); ++i) out(i, c) = y1 - out(i, c);
    }
  }

 private:
  DenseGenerator y_;
};

std::unique_ptr<PathGenerator> dense_for(const KernelSpec& spec, const GridSpec& grid,
                                         Construction c = Construction::RAW_Y) {
  return std::make_unique<DenseGenerator>(factorize(build_gram(spec, grid), grid), c);
}

}  // namespace

std::unique_ptr<PathGenerator> make_dense_generator(Factorization fact) {
  if (!fact.grid) throw DomainError("make_dense_generator: factorization carries no grid");
  return std::make_unique<DenseGenerator>(std::move(fact), Construction::RAW_Y);
}

std::unique_ptr<PathGenerator> make_fbm_fast_generator(double kappa, const GridSpec& grid) {
  grid.validate();
  if (!(kappa > 0 && kappa <= 2)) throw DomainError("fast fBm: kappa must lie in (0, 2]");
  if (grid.t_start != 0) throw DomainError("fast fBm: grid must start at 0");
  if (kappa == 1.0 || kappa == 2.0)
    return std::make_unique<FbmFastGenerator>(kappa, grid, Eigen::VectorXd());

  const long increments = grid.n_points - 1;
  const long half = static_cast<long>(std::bit_ceil(static_cast<unsigned long>(increments)));
  const long size_m = 2 * half;
  const double scale = std::pow(grid.spacing(), kappa);
  auto g = [&](long k) {
    const double kk = static_cast<double>(k);
    return scale * (std::pow(kk + 1, kappa) + std::pow(std::abs(kk - 1), kappa) - 2 * std::pow(kk, kappa)) / 2;
  };
  std::vector<std::complex<double>> row(size_m), eig(size_m);
  for (long k = 0; k <= half; ++k) row[k] = g(k);
  for (long k = half + 1; k < size_m; ++k) row[k] = g(size_m - k);
  Eigen::FFT<double> fft;
  fft.fwd(eig, row);
  double lo = HUGE_VAL, hi = 0;
  for (const auto& e : eig) {
    lo = std::min(lo, e.real());
    hi = std::max(hi, e.real());
  }
  if (lo < -1e-10 * hi) {
    std::clog << "lsgp: circulant embedding for kappa=" << kappa
              << " has negative eigenvalue " << lo << "; using dense factorization\n";
    return dense_for(KernelSpec::fbm(kappa), grid);
  }
  Eigen::VectorXd sq(size_m);
  for (long k = 0; k < size_m; ++k)
    sq(k) = std::sqrt(std::max(eig[k].real(), 0.0) / static_cast<double>(size_m));
  return std::make_unique<FbmFastGenerator>(kappa, grid, std::move(sq));
}

std::unique_ptr<PathGenerator> make_risk_x_generator(const KernelSpec& spec, const GridSpec& grid) {
  grid.validate();
  if (grid.t_end != 1.0) throw DomainError("risk process grid must lie in [0, 1] and end at 1");
  return std::make_unique<RiskXGenerator>(factorize(build_gram(spec, grid), grid));
}

std::unique_ptr<PathGenerator> make_generator(const KernelSpec& spec, const GridSpec& grid) {
  grid.validate();
  if (spec.family == Family::FBM && grid.t_start == 0)
    return make_fbm_fast_generator(spec.param("kappa"), grid);
  return dense_for(spec, grid);
}

PathBatch draw(const PathGenerator& gen, long n_paths, std::uint64_t seed) {
  if (n_paths < 1) throw DomainError("draw: n_paths must be at least 1");
  PathBatch batch;
  batch.grid = gen.grid();
  batch.seed = seed;
  batch.construction = gen.construction();
  batch.values.resize(n_paths, gen.size());
  for_each_path(gen, n_paths, seed, [&](long p, const auto& col) {
    batch.values.row(p) = col.transpose();
  });
  return batch;
}

PathBatch draw(const Factorization& fact, long n_paths, std::uint64_t seed) {
  if (!fact.grid) throw DomainError("draw: factorization carries no grid");
  DenseGenerator gen(fact, Construction::RAW_Y);
  return draw(gen, n_paths, seed);
}

PathBatch draw_risk_x(const KernelSpec& spec, const GridSpec& grid, long n_paths, std::uint64_t seed) {
  return draw(*make_risk_x_generator(spec, grid), n_paths, seed);
}

PathBatch draw_fbm_fast(double kappa, const GridSpec& grid, long n_paths, std::uint64_t seed) {
  return draw(*make_fbm_fast_generator(kappa, grid), n_paths, seed);
}

void to_json(nlohmann::json& j, const GridSpec& g) {
  j = nlohmann::json{{"t_start", g.t_start}, {"t_end", g.t_end}, {"n_points", g.n_points}};
}

void from_json(const nlohmann::json& j, GridSpec& g) {
  g.t_start = j.at("t_start").get<double>();
  g.t_end = j.at("t_end").get<double>();
  g.n_points = j.at("n_points").get<int>();
  g.validate();
}

void write_binary(const PathBatch& batch, std::ostream& os) {
  static_assert(std::endian::native == std::endian::little, "binary layout is little-endian");
  nlohmann::json header{{"grid", batch.grid},
                        {"seed", batch.seed},
                        {"n_paths", batch.values.rows()},
                        {"n_points", batch.values.cols()},
                        {"construction", to_string(batch.construction)},
                        {"dtype", "float64"},
                        {"layout", "row-major"}};
  os << header.dump() << '\n';
  os.write(reinterpret_cast<const char*>(batch.values.data()),
           static_cast<std::streamsize>(batch.values.size() * sizeof(double)));
}

PathBatch read_binary(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DomainError("read_binary: missing header");
  const auto header = nlohmann::json::parse(line);
  PathBatch batch;
  batch.grid = header.at("grid").get<GridSpec>();
  batch.seed = header.at("seed").get<std::uint64_t>();
  const auto c = header.at("construction").get<std::string>();
  batch.construction = c == "RISK_X" ? Construction::RISK_X
                       : c == "FBM_FAST" ? Construction::FBM_FAST
                                         : Construction::RAW_Y;
  batch.values.resize(header.at("n_paths").get<Eigen::Index>(), header.at("n_points").get<Eigen::Index>());
  is.read(reinterpret_cast<char*>(batch.values.data()),
          static_cast<std::streamsize>(batch.values.size() * sizeof(double)));
  if (!is) throw DomainError("read_binary: truncated payload");
  return batch;
}

void write_csv(const PathBatch& batch, std::ostream& os) {
  char buf[64];
  os << "path_index";
  for (int i = 0; i < batch.grid.n_points; ++i) {
    std::snprintf(buf, sizeof buf, ",t=%.17g", batch.grid.point(i));
    os << buf;
  }
  os << "\r\n";
  for (Eigen::Index p = 0; p < batch.values.rows(); ++p) {
    os << p;
    for (Eigen::Index i = 0; i < batch.values.cols(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.17g", batch.values(p, i));
      os << buf;
    }
    os << "\r\n";
  }
}

}  // namespace lsgp
