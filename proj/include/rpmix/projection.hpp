#pragma once

#include <cstdint>
#include <string_view>

#include "rpmix/gaussian.hpp"

namespace rpmix {

enum class ProjectionKind { OrthonormalRP, UniformRP, PCA };

std::string_view to_string(ProjectionKind kind);
ProjectionKind projection_kind_from_string(std::string_view name);

inline constexpr double kOrthonormalTolerance = 1e-9;

/// A d x n linear map x -> A x. Orthonormal-row kinds are checked on
/// construction (max |A A^T - I| <= 1e-9).
class ProjectionMatrix {
 public:
  ProjectionMatrix(Matrix rows, ProjectionKind kind);

  const Matrix& rows() const noexcept { return rows_; }
  ProjectionKind kind() const noexcept { return kind_; }
  Index source_dim() const noexcept { return rows_.cols(); }
  Index target_dim() const noexcept { return rows_.rows(); }

 private:
  Matrix rows_;
  ProjectionKind kind_;
};

/// max |A A^T - I_d|.
double orthonormality_error(const Matrix& rows);

/// Gaussian entries, rows orthonormalized by modified Gram-Schmidt.
ProjectionMatrix random_orthonormal(Index n, Index d, std::uint64_t seed);

/// Uniform [-1, 1] entries scaled by sqrt(3 / n), so E|Av|^2 = d/n for unit v.
ProjectionMatrix random_uniform(Index n, Index d, std::uint64_t seed);

/// Top-d principal directions of the centered data, via thin SVD.
/// Rows ordered by descending singular value; first non-negligible coordinate
/// of each row is positive.
ProjectionMatrix pca(const Dataset& data, Index d);

Dataset project_data(const ProjectionMatrix& p, const Dataset& data);
Gaussian project_gaussian(const ProjectionMatrix& p, const Gaussian& g);
/// Components sharing a covariance keep sharing the projected one.
Mixture project_mixture(const ProjectionMatrix& p, const Mixture& m);

/// Sum over rows of |A x_i - A mean|^2.
double captured_variance(const ProjectionMatrix& p, const Dataset& data);

}  // namespace rpmix
