#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace stoiht {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Sorted, duplicate-free set of 0-based column indices.
class SupportSet {
 public:
  SupportSet() = default;

  /// Sorts the indices. Throws std::invalid_argument on duplicates or
  /// negative entries.
  explicit SupportSet(std::vector<Index> indices);

  /// The set {0, 1, ..., count-1}.
  static SupportSet first(Index count);

  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  bool contains(Index j) const;
  const std::vector<Index>& indices() const { return indices_; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }

  SupportSet unite(const SupportSet& other) const;
  SupportSet intersect(const SupportSet& other) const;

  /// True when every index is below `n`.
  bool fits(Index n) const { return indices_.empty() || indices_.back() < n; }

  friend bool operator==(const SupportSet&, const SupportSet&) = default;

 private:
  std::vector<Index> indices_;
};

/// Contiguous row range of the measurement system that forms one block.
struct BlockView {
  Index index = 0;
  Index row_begin = 0;
  Index rows = 0;
};

/// A synthetic compressed-sensing problem y = A x + z, split into
/// m / b row blocks of b rows each.
class ProblemInstance {
 public:
  /// Computes y = A x_true + z. Throws std::invalid_argument if the shapes
  /// disagree, the block size does not divide m, or x_true has more than
  /// `sparsity` nonzeros.
  ProblemInstance(Matrix a, Vector x_true, Vector z, Index sparsity,
                  Index block_size, double noise_std = 0.0,
                  std::uint64_t seed = 0);

  const Matrix& a() const { return a_; }
  const Vector& x_true() const { return x_true_; }
  const Vector& z() const { return z_; }
  const Vector& y() const { return y_; }

  Index n() const { return a_.cols(); }
  Index m() const { return a_.rows(); }
  Index sparsity() const { return sparsity_; }
  Index block_size() const { return block_size_; }
  Index num_blocks() const { return a_.rows() / block_size_; }
  double noise_std() const { return noise_std_; }
  std::uint64_t seed() const { return seed_; }

  /// Indices where x_true is nonzero.
  SupportSet true_support() const;

  /// Throws std::out_of_range unless 0 <= i < num_blocks().
  BlockView block(Index i) const;

 private:
  Matrix a_;
  Vector x_true_;
  Vector z_;
  Vector y_;
  Index sparsity_;
  Index block_size_;
  double noise_std_;
  std::uint64_t seed_;
};

/// Draws A with i.i.d. N(0, 1/m) entries, an s-sparse x_true with uniformly
/// random support and standard Gaussian nonzeros, and z ~ N(0, noise_std^2).
/// The result depends only on the arguments.
ProblemInstance generate_instance(Index n, Index m, Index s, Index block_size,
                                  double noise_std, std::uint64_t seed);

/// Indices of the s largest-magnitude entries of `a`; ties go to the lower
/// index, so zero entries fill the set in index order.
SupportSet largest_support(const Vector& a, Index s);

/// Keeps the s largest-magnitude entries of `a` and zeroes the rest.
Vector hard_threshold(const Vector& a, Index s);

/// Zeroes every entry of `a` outside `support`. Throws std::out_of_range
/// if an index is not below a.size().
Vector project(const Vector& a, const SupportSet& support);

/// A.middleRows(row_begin, rows) * x, skipping zero entries of x.
/// Row results do not depend on which row range is requested.
Vector apply_rows(const Matrix& a, Index row_begin, Index rows,
                  const Vector& x);

/// y_b - A_b x for block `block` (0-based).
Vector block_residual(const ProblemInstance& problem, const Vector& x,
                      Index block);

/// ||y - A x||_2.
double residual_norm(const ProblemInstance& problem, const Vector& x);

/// Text format: a `#` comment line, the header `n m s b noise_std seed`,
/// m rows of A, one line of x_true and one line of z. Values are written
/// with 17 significant digits so a load reproduces the instance exactly.
void save_instance(const ProblemInstance& problem,
                   const std::filesystem::path& path);
ProblemInstance load_instance(const std::filesystem::path& path);

}  // namespace stoiht
