#include "rpmix/projection.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include <Eigen/SVD>

#include "rpmix/error.hpp"
#include "rpmix/random.hpp"

namespace rpmix {

namespace {

void require_dims(Index n, Index d) {
  if (d < 1 || n < 1 || d > n) {
    std::ostringstream msg;
    msg << "need 1 <= d <= n, got n=" << n << " d=" << d;
    throw Error(ErrorKind::BadDims, msg.str());
  }
}

// Regenerations allowed after a near-zero Gram-Schmidt residual.
constexpr int kMaxRedraws = 3;
constexpr double kResidualFloor = 1e-10;
// Coordinates below this magnitude are treated as zero by the PCA sign rule.
constexpr double kSignThreshold = 1e-9;

}  // namespace

std::string_view to_string(ProjectionKind kind) {
  switch (kind) {
    case ProjectionKind::OrthonormalRP: return "OrthonormalRP";
    case ProjectionKind::UniformRP: return "UniformRP";
    case ProjectionKind::PCA: return "PCA";
  }
  return "Unknown";
}

ProjectionKind projection_kind_from_string(std::string_view name) {
  if (name == "OrthonormalRP") return ProjectionKind::OrthonormalRP;
  if (name == "UniformRP") return ProjectionKind::UniformRP;
  if (name == "PCA") return ProjectionKind::PCA;
  throw Error(ErrorKind::ParseError, "unknown projection kind '" + std::string(name) + "'");
}

double orthonormality_error(const Matrix& rows) {
  const Matrix gram = rows * rows.transpose();
  return (gram - Matrix::Identity(rows.rows(), rows.rows())).cwiseAbs().maxCoeff();
}

ProjectionMatrix::ProjectionMatrix(Matrix rows, ProjectionKind kind)
    : rows_(std::move(rows)), kind_(kind) {
  require_dims(rows_.cols(), rows_.rows());
  if (!rows_.allFinite()) throw Error(ErrorKind::BadSpec, "projection has non-finite entries");
  if (kind_ != ProjectionKind::UniformRP) {
    const double err = orthonormality_error(rows_);
    if (err > kOrthonormalTolerance) {
      std::ostringstream msg;
      msg << to_string(kind_) << " rows are not orthonormal (max |AA^T - I| = " << err << ")";
      throw Error(ErrorKind::BadSpec, msg.str());
    }
  }
}

ProjectionMatrix random_orthonormal(Index n, Index d, std::uint64_t seed) {
  require_dims(n, d);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int attempt = 0; attempt <= kMaxRedraws; ++attempt) {
    Matrix a(d, n);
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < n; ++j) a(i, j) = normal(rng);
    }
    bool degenerate = false;
    for (Index i = 0; i < d && !degenerate; ++i) {
      const double original = a.row(i).norm();
      for (Index j = 0; j < i; ++j) {
        a.row(i) -= a.row(j).dot(a.row(i)) * a.row(j);
      }
      const double residual = a.row(i).norm();
      if (!(residual > kResidualFloor * original)) {
        degenerate = true;
        break;
      }
      a.row(i) /= residual;
    }
    if (!degenerate) return ProjectionMatrix(std::move(a), ProjectionKind::OrthonormalRP);
  }
  throw Error(ErrorKind::DegenerateDraw, "Gram-Schmidt residual vanished on every redraw");
}

ProjectionMatrix random_uniform(Index n, Index d, std::uint64_t seed) {
  require_dims(n, d);
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Matrix a(d, n);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < n; ++j) a(i, j) = uniform(rng);
  }
  a *= std::sqrt(3.0 / static_cast<double>(n));
  return ProjectionMatrix(std::move(a), ProjectionKind::UniformRP);
}

ProjectionMatrix pca(const Dataset& data, Index d) {
  require_dims(data.cols(), d);
  if (data.rows() < d + 1) {
    std::ostringstream msg;
    msg << "PCA to " << d << " dims needs at least " << d + 1 << " rows, got " << data.rows();
    throw Error(ErrorKind::NotEnoughData, msg.str());
  }
  Matrix centered = data.rowwise() - data.colwise().mean();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  Matrix rows = svd.matrixV().leftCols(d).transpose();
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < rows.cols(); ++j) {
      if (std::abs(rows(i, j)) > kSignThreshold) {
        if (rows(i, j) < 0.0) rows.row(i) *= -1.0;
        break;
      }
    }
  }
  return ProjectionMatrix(std::move(rows), ProjectionKind::PCA);
}

Dataset project_data(const ProjectionMatrix& p, const Dataset& data) {
  require_same_dim(p.source_dim(), data.cols(), "project_data");
  return data * p.rows().transpose();
}

namespace {

std::shared_ptr<const Covariance> project_covariance(const ProjectionMatrix& p,
                                                     const Covariance& cov) {
  const Matrix& a = p.rows();
  Matrix projected = a * cov.matrix() * a.transpose();
  projected = 0.5 * (projected + projected.transpose());
  return std::make_shared<const Covariance>(std::move(projected));
}

}  // namespace

Gaussian project_gaussian(const ProjectionMatrix& p, const Gaussian& g) {
  require_same_dim(p.source_dim(), g.dim(), "project_gaussian");
  return Gaussian(p.rows() * g.mean(), project_covariance(p, g.factor()));
}

Mixture project_mixture(const ProjectionMatrix& p, const Mixture& m) {
  require_same_dim(p.source_dim(), m.dim(), "project_mixture");
  std::map<const Covariance*, std::shared_ptr<const Covariance>> cache;
  std::vector<Gaussian> components;
  components.reserve(m.components().size());
  for (const auto& g : m.components()) {
    auto& projected = cache[&g.factor()];
    if (!projected) projected = project_covariance(p, g.factor());
    components.emplace_back(p.rows() * g.mean(), projected);
  }
  return Mixture(std::move(components), m.weights());
}

double captured_variance(const ProjectionMatrix& p, const Dataset& data) {
  const Dataset projected = project_data(p, data);
  const Dataset centered = projected.rowwise() - projected.colwise().mean();
  return centered.squaredNorm();
}

}  // namespace rpmix
