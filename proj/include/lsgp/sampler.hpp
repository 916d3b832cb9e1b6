#pragma once

#include <omp.h>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lsgp/kernels.hpp"

namespace lsgp {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform grid t_start = t_0 < ... < t_{n-1} = t_end.
struct GridSpec {
  double t_start{0};
  double t_end{1};
  int n_points{2};

  double spacing() const { return (t_end - t_start) / (n_points - 1); }
  double point(int i) const { return i == n_points - 1 ? t_end : t_start + i * spacing(); }
  Eigen::VectorXd points() const;
  /// Throws DomainError unless t_start >= 0, t_end > t_start and n_points >= 2.
  void validate() const;

  bool operator==(const GridSpec&) const = default;
};

/// Uniform grid on [t_start, t_end] with the given spacing (rounded to a whole
/// number of cells).
GridSpec grid_with_spacing(double t_start, double t_end, double spacing);

Eigen::MatrixXd build_gram(const KernelSpec& spec, const GridSpec& grid);
/// Gram matrix on arbitrary distinct nonnegative points; duplicates are rejected.
Eigen::MatrixXd build_gram(const KernelSpec& spec, std::span<const double> points);

/// Lower-triangular root of a Gram matrix. Rows with zero variance (t = 0) are left
/// out of the factorization and their path values are pinned to exactly 0.
struct Factorization {
  std::optional<GridSpec> grid;
  Eigen::MatrixXd gram;
  Eigen::MatrixXd root;     ///< over the active indices only
  std::vector<int> active;  ///< indices with positive variance
  double jitter_used{0};

  /// Covariance of the vectors `root * z` scattered back onto the full index set.
  double covariance(int i, int j) const;
  /// root * root^T embedded in the full index set (pinned rows are zero).
  Eigen::MatrixXd reconstructed() const;
};

/// Cholesky factorization. On failure, retries with jitter * I where jitter grows
/// x10 from 1e-12 to 1e-6 times trace/n; throws NumericError naming the worst pivot
/// if even the largest jitter leaves the matrix indefinite.
Factorization factorize(const Eigen::MatrixXd& gram, std::optional<GridSpec> grid = {});

enum class Construction { RAW_Y, RISK_X, FBM_FAST };

const char* to_string(Construction c);

/// n_paths x n_points sampled values on a shared grid.
struct PathBatch {
  GridSpec grid;
  RowMatrix values;
  std::uint64_t seed{0};
  Construction construction{Construction::RAW_Y};
};

/// Source of centered Gaussian vectors on a grid. Path p is produced from its own
/// random substream, inside the fixed block p / kBlock, so output never depends on
/// the number of workers or on how many paths are requested.
class PathGenerator {
 public:
  static constexpr int kBlock = 32;

  virtual ~PathGenerator() = default;

  const GridSpec& grid() const { return grid_; }
  Construction construction() const { return construction_; }
  int size() const { return grid_.n_points; }

  /// Exact covariance of the generated vectors at grid indices i and j.
  virtual double covariance(int i, int j) const = 0;
  /// Fills out (n_points x kBlock) with paths first, ..., first + kBlock - 1.
  /// `first` must be a multiple of kBlock.
  virtual void generate_block(std::uint64_t seed, long first, Eigen::Ref<Eigen::MatrixXd> out) const = 0;

  /// Column j of the exact covariance; overridden where a faster lookup exists.
  virtual Eigen::VectorXd covariance_column(int j) const;
  Eigen::VectorXd variances() const;

 protected:
  PathGenerator(GridSpec grid, Construction c) : grid_(grid), construction_(c) {}

 private:
  GridSpec grid_;
  Construction construction_;
};

std::unique_ptr<PathGenerator> make_dense_generator(Factorization fact);
/// Exact fBm on a uniform grid starting at 0 via circulant embedding of the
/// increment sequence; kappa = 1 and kappa = 2 use their closed forms. Falls back to
/// a dense factorization (with a note on std::clog) if the embedding has a
/// significantly negative eigenvalue.
std::unique_ptr<PathGenerator> make_fbm_fast_generator(double kappa, const GridSpec& grid);
/// X(t) = Y(1) - Y(t) on a grid inside [0, 1] that ends at 1.
std::unique_ptr<PathGenerator> make_risk_x_generator(const KernelSpec& spec, const GridSpec& grid);
/// Fast fBm path when applicable, dense factorization otherwise.
std::unique_ptr<PathGenerator> make_generator(const KernelSpec& spec, const GridSpec& grid);

/// Calls fn(path_index, path_values) for every path in [0, n_paths), in parallel over
/// blocks. fn must only write state owned by its path index.
template <typename Fn>
void for_each_path(const PathGenerator& gen, long n_paths, std::uint64_t seed, Fn&& fn) {
  const long blocks = (n_paths + PathGenerator::kBlock - 1) / PathGenerator::kBlock;
#pragma omp parallel
  {
    Eigen::MatrixXd buffer(gen.size(), PathGenerator::kBlock);
#pragma omp for schedule(dynamic, 1)
    for (long b = 0; b < blocks; ++b) {
      const long first = b * PathGenerator::kBlock;
      gen.generate_block(seed, first, buffer);
      const long last = std::min(n_paths, first + PathGenerator::kBlock);
      for (long p = first; p < last; ++p) fn(p, buffer.col(p - first));
    }
  }
}

PathBatch draw(const PathGenerator& gen, long n_paths, std::uint64_t seed);
PathBatch draw(const Factorization& fact, long n_paths, std::uint64_t seed);
PathBatch draw_risk_x(const KernelSpec& spec, const GridSpec& grid, long n_paths, std::uint64_t seed);
PathBatch draw_fbm_fast(double kappa, const GridSpec& grid, long n_paths, std::uint64_t seed);

/// One JSON header line (grid, seed, dims, construction) followed by row-major
/// little-endian float64 values.
void write_binary(const PathBatch& batch, std::ostream& os);
PathBatch read_binary(std::istream& is);
/// RFC-4180 CSV: path_index followed by one column per grid point.
void write_csv(const PathBatch& batch, std::ostream& os);

void to_json(nlohmann::json& j, const GridSpec& g);
void from_json(const nlohmann::json& j, GridSpec& g);

}  // namespace lsgp
