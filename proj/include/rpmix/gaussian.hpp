#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace rpmix {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Points are rows.
using Dataset = Eigen::MatrixXd;

inline constexpr double kSymmetryTolerance = 1e-9;
inline constexpr double kMaxConditionNumber = 1e12;

struct SpectralSummary {
  Vector eigenvalues;  // ascending
  double eccentricity = 1.0;
  double trace = 0.0;
};

/// Ascending eigenvalues of a symmetric matrix. No definiteness check.
Vector symmetric_eigenvalues(const Matrix& symmetric);

/// Eigenvalues, eccentricity sqrt(lambda_max / lambda_min) and trace.
/// Throws NotSymmetric or NotPositiveDefinite.
SpectralSummary spectral_summary(const Matrix& covariance);

/// A validated symmetric positive-definite matrix together with its lower
/// Cholesky factor. Immutable; Gaussians that share one covariance share one
/// instance.
class Covariance {
 public:
  explicit Covariance(Matrix matrix);

  const Matrix& matrix() const noexcept { return matrix_; }
  const Matrix& cholesky_lower() const noexcept { return lower_; }
  Index dim() const noexcept { return matrix_.rows(); }
  double log_det() const noexcept { return log_det_; }
  double trace() const noexcept { return trace_; }
  double condition_number() const noexcept { return condition_; }
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }
  double max_eigenvalue() const noexcept { return max_eigenvalue_; }
  bool is_diagonal() const noexcept { return diagonal_; }

 private:
  Matrix matrix_;
  Matrix lower_;
  double log_det_ = 0.0;
  double trace_ = 0.0;
  double condition_ = 1.0;
  double min_eigenvalue_ = 0.0;
  double max_eigenvalue_ = 0.0;
  bool diagonal_ = false;
};

class Gaussian {
 public:
  Gaussian(Vector mean, Matrix covariance);
  Gaussian(Vector mean, std::shared_ptr<const Covariance> covariance);

  const Vector& mean() const noexcept { return mean_; }
  const Matrix& covariance() const noexcept { return covariance_->matrix(); }
  const Covariance& factor() const noexcept { return *covariance_; }
  const std::shared_ptr<const Covariance>& shared_covariance() const noexcept {
    return covariance_;
  }
  Index dim() const noexcept { return mean_.size(); }

 private:
  Vector mean_;
  std::shared_ptr<const Covariance> covariance_;
};

class Mixture {
 public:
  Mixture(std::vector<Gaussian> components, Vector weights);

  Index size() const noexcept { return static_cast<Index>(components_.size()); }
  Index dim() const noexcept { return components_.front().dim(); }
  const std::vector<Gaussian>& components() const noexcept { return components_; }
  const Gaussian& component(Index i) const { return components_.at(static_cast<std::size_t>(i)); }
  const Vector& weights() const noexcept { return weights_; }
  double weight(Index i) const { return weights_(i); }

 private:
  std::vector<Gaussian> components_;
  Vector weights_;
};

// Density and distance. All of these go through the Cholesky factor.
double log_density(const Gaussian& g, const Vector& x);
/// log_density for every row of `data`.
Vector log_density_rows(const Gaussian& g, const Dataset& data);
double mahalanobis(const Gaussian& g, const Vector& x);

/// sqrt(trace(Sigma)): the root expected squared distance from the mean.
double radius(const Gaussian& g);
double pairwise_separation(const Gaussian& a, const Gaussian& b);
/// Minimum pairwise separation over all unordered pairs.
double mixture_separation(const Mixture& m);

struct LabeledSample {
  Dataset points;
  std::vector<int> components;
};

Dataset sample(const Mixture& m, Index count, std::uint64_t seed);
LabeledSample sample_labeled(const Mixture& m, Index count, std::uint64_t seed);

/// 2 exp(-n eps^2 / 24), the tail bound on | |X|^2 / n - 1 | > eps for N(0, I_n).
double norm_tail_bound(Index n, double eps);

// Shared helpers for dimension checks.
void require_same_dim(Index expected, Index actual, const char* what);

}  // namespace rpmix
