#include "nullguard/geometry.hpp"

#include "nullguard/error.hpp"

#include <cmath>
#include <string>

namespace nullguard {

Direction::Direction(const Vector& v) {
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(Errc::degenerate_directions, "direction must be a finite nonzero vector");
  }
  unit_ = v / norm;
}

SubspaceBasis::SubspaceBasis(Eigen::Index dim, std::vector<Direction> basis)
    : dim_(dim), basis_(std::move(basis)) {
  if (static_cast<Eigen::Index>(basis_.size()) > dim_) {
    throw Error(Errc::invalid_argument, "basis has more vectors than the ambient dimension");
  }
  for (std::size_t i = 0; i < basis_.size(); ++i) {
    if (basis_[i].dim() != dim_) {
      throw Error(Errc::dimension_mismatch, "basis vector " + std::to_string(i) + " has wrong dimension");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(basis_[i].vector().dot(basis_[j].vector())) >= 1e-8) {
        throw Error(Errc::invalid_argument, "basis vectors are not orthogonal");
      }
    }
  }
}

Matrix SubspaceBasis::rows() const {
  Matrix out(static_cast<Eigen::Index>(basis_.size()), dim_);
  for (std::size_t i = 0; i < basis_.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = basis_[i].vector().transpose();
  }
  return out;
}

ProjectionPair ProjectionPair::identity(Eigen::Index dim) {
  return {Matrix::Zero(dim, dim), Matrix::Identity(dim, dim)};
}

SubspaceBasis orthonormalize(std::span<const Vector> directions) {
  if (directions.empty()) {
    throw Error(Errc::degenerate_directions, "degenerate direction set");
  }
  const Eigen::Index dim = directions.front().size();
  std::vector<Direction> basis;
  for (const Vector& v : directions) {
    if (v.size() != dim) {
      throw Error(Errc::dimension_mismatch, "directions do not share a dimension");
    }
    const double input_norm = v.norm();
    if (!(input_norm > 0.0)) continue;
    Vector residual = v;
    for (int pass = 0; pass < 2; ++pass) {
      for (const Direction& b : basis) {
        residual -= b.vector().dot(residual) * b.vector();
      }
    }
    if (residual.norm() < kDependenceThreshold * input_norm) continue;
    basis.emplace_back(residual);
    if (static_cast<Eigen::Index>(basis.size()) == dim) break;
  }
  if (basis.empty()) {
    throw Error(Errc::degenerate_directions, "degenerate direction set");
  }
  return SubspaceBasis(dim, std::move(basis));
}

ProjectionPair projection_pair(const SubspaceBasis& basis) {
  const Eigen::Index dim = basis.dim();
  if (basis.empty()) return ProjectionPair::identity(dim);
  const Matrix b = basis.rows();
  ProjectionPair pair;
  pair.rowspace = b.transpose() * b;
  pair.nullspace = Matrix::Identity(dim, dim) - pair.rowspace;
  return pair;
}

Decomposition decompose(const Vector& h, const ProjectionPair& pair) {
  if (h.size() != pair.dim()) {
    throw Error(Errc::dimension_mismatch,
                "vector has dimension " + std::to_string(h.size()) + ", projection expects " +
                    std::to_string(pair.dim()));
  }
  Decomposition out;
  out.null_part = pair.nullspace * h;
  out.row_part = pair.rowspace * h;
  return out;
}

}  // namespace nullguard
