#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace nullguard {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Residual norm (relative to the input norm) below which a vector is treated
/// as linearly dependent on the basis built so far.
inline constexpr double kDependenceThreshold = 1e-8;

/// Unit-norm direction in embedding space.
class Direction {
 public:
  /// Normalizes `v`; throws Errc::degenerate_directions on a zero or non-finite vector.
  explicit Direction(const Vector& v);

  const Vector& vector() const noexcept { return unit_; }
  Eigen::Index dim() const noexcept { return unit_.size(); }
  double dot(const Vector& h) const { return unit_.dot(h); }
  Direction flipped() const { return Direction(-unit_); }

 private:
  Vector unit_;
};

/// Ordered orthonormal basis of a concept subspace (k <= d vectors).
class SubspaceBasis {
 public:
  /// Empty basis in R^dim.
  explicit SubspaceBasis(Eigen::Index dim) : dim_(dim) {}

  /// Validates orthonormality (|b_i . b_j| < 1e-8 for i != j).
  SubspaceBasis(Eigen::Index dim, std::vector<Direction> basis);

  Eigen::Index dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return basis_.size(); }
  bool empty() const noexcept { return basis_.empty(); }
  const Direction& operator[](std::size_t i) const { return basis_[i]; }
  const std::vector<Direction>& directions() const noexcept { return basis_; }

  /// k x d matrix whose rows are the basis vectors.
  Matrix rows() const;

 private:
  Eigen::Index dim_;
  std::vector<Direction> basis_;
};

/// Complementary orthogonal projections: `rowspace` onto span(basis), `nullspace` onto its complement.
struct ProjectionPair {
  Matrix rowspace;
  Matrix nullspace;

  Eigen::Index dim() const noexcept { return nullspace.rows(); }
  static ProjectionPair identity(Eigen::Index dim);
};

struct Decomposition {
  Vector null_part;
  Vector row_part;
};

/// Modified Gram-Schmidt with one re-orthogonalization pass. Vectors whose
/// residual falls under kDependenceThreshold are dropped.
SubspaceBasis orthonormalize(std::span<const Vector> directions);

ProjectionPair projection_pair(const SubspaceBasis& basis);

Decomposition decompose(const Vector& h, const ProjectionPair& pair);

}  // namespace nullguard
