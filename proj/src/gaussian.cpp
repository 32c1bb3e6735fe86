#include "rpmix/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "rpmix/error.hpp"
#include "rpmix/random.hpp"

namespace rpmix {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

bool is_exactly_diagonal(const Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) {
      if (i != j && m(i, j) != 0.0) return false;
    }
  }
  return true;
}

// Checks squareness and symmetry (relative to the largest entry) and returns
// the symmetrized matrix.
Matrix symmetrized(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream msg;
    msg << "expected a non-empty square matrix, got " << m.rows() << "x" << m.cols();
    throw Error(ErrorKind::BadDims, msg.str());
  }
  if (!m.allFinite()) throw Error(ErrorKind::NotPositiveDefinite, "matrix has non-finite entries");
  const double scale = m.cwiseAbs().maxCoeff();
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance * scale) {
    std::ostringstream msg;
    msg << "max |A - A^T| = " << asym << " exceeds " << kSymmetryTolerance << " * " << scale;
    throw Error(ErrorKind::NotSymmetric, msg.str());
  }
  return 0.5 * (m + m.transpose());
}

}  // namespace

void require_same_dim(Index expected, Index actual, const char* what) {
  if (expected != actual) {
    std::ostringstream msg;
    msg << what << ": expected dimension " << expected << ", got " << actual;
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
}

Vector symmetric_eigenvalues(const Matrix& symmetric) {
  if (is_exactly_diagonal(symmetric)) {
    Vector d = symmetric.diagonal();
    std::sort(d.data(), d.data() + d.size());
    return d;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::IllConditioned, "symmetric eigensolver did not converge");
  }
  return solver.eigenvalues();
}

SpectralSummary spectral_summary(const Matrix& covariance) {
  const Matrix sym = symmetrized(covariance);
  SpectralSummary out;
  out.eigenvalues = symmetric_eigenvalues(sym);
  const double lo = out.eigenvalues(0);
  const double hi = out.eigenvalues(out.eigenvalues.size() - 1);
  if (!(lo > 0.0)) {
    std::ostringstream msg;
    msg << "smallest eigenvalue " << lo << " is not positive";
    throw Error(ErrorKind::NotPositiveDefinite, msg.str());
  }
  out.eccentricity = std::sqrt(hi / lo);
  out.trace = sym.trace();
  return out;
}

Covariance::Covariance(Matrix matrix) : matrix_(symmetrized(matrix)) {
  diagonal_ = is_exactly_diagonal(matrix_);
  const Vector eig = symmetric_eigenvalues(matrix_);
  min_eigenvalue_ = eig(0);
  max_eigenvalue_ = eig(eig.size() - 1);
  if (!(min_eigenvalue_ > 0.0)) {
    std::ostringstream msg;
    msg << "smallest eigenvalue " << min_eigenvalue_ << " is not positive";
    throw Error(ErrorKind::NotPositiveDefinite, msg.str());
  }
  condition_ = max_eigenvalue_ / min_eigenvalue_;
  trace_ = matrix_.trace();

  if (diagonal_) {
    lower_ = Matrix::Zero(dim(), dim());
    lower_.diagonal() = matrix_.diagonal().cwiseSqrt();
  } else {
    Eigen::LLT<Matrix> llt(matrix_);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::NotPositiveDefinite, "Cholesky factorization failed");
    }
    lower_ = llt.matrixL();
  }
  log_det_ = 2.0 * lower_.diagonal().array().log().sum();
}

Gaussian::Gaussian(Vector mean, Matrix covariance)
    : Gaussian(std::move(mean), std::make_shared<const Covariance>(std::move(covariance))) {}

Gaussian::Gaussian(Vector mean, std::shared_ptr<const Covariance> covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  if (!covariance_) throw Error(ErrorKind::BadSpec, "null covariance");
  require_same_dim(covariance_->dim(), mean_.size(), "Gaussian mean");
  if (!mean_.allFinite()) throw Error(ErrorKind::BadSpec, "mean has non-finite entries");
}

Mixture::Mixture(std::vector<Gaussian> components, Vector weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.empty()) throw Error(ErrorKind::TooFewComponents, "mixture needs a component");
  if (weights_.size() != size()) {
    throw Error(ErrorKind::ShapeMismatch, "one weight per component required");
  }
  for (const auto& g : components_) require_same_dim(dim(), g.dim(), "mixture component");
  if (!(weights_.array() > 0.0).all()) throw Error(ErrorKind::BadSpec, "weights must be positive");
  const double total = weights_.sum();
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "weights sum to " << total;
    throw Error(ErrorKind::BadSpec, msg.str());
  }
}

namespace {

void require_well_conditioned(const Gaussian& g) {
  if (g.factor().condition_number() >= kMaxConditionNumber) {
    std::ostringstream msg;
    msg << "covariance condition number " << g.factor().condition_number() << " >= "
        << kMaxConditionNumber;
    throw Error(ErrorKind::IllConditioned, msg.str());
  }
}

// Squared Mahalanobis norms of the columns of `centered` (dim x count).
Vector whitened_sq_norms(const Covariance& cov, Matrix centered) {
  if (cov.is_diagonal()) {
    centered.array().colwise() /= cov.cholesky_lower().diagonal().array();
  } else {
    cov.cholesky_lower().triangularView<Eigen::Lower>().solveInPlace(centered);
  }
  return centered.colwise().squaredNorm().transpose();
}

}  // namespace

Vector log_density_rows(const Gaussian& g, const Dataset& data) {
  require_same_dim(g.dim(), data.cols(), "log_density data");
  require_well_conditioned(g);
  Matrix centered = data.transpose();
  centered.colwise() -= g.mean();
  const Vector q = whitened_sq_norms(g.factor(), std::move(centered));
  const double base = -0.5 * static_cast<double>(g.dim()) * kLog2Pi - 0.5 * g.factor().log_det();
  return (base - 0.5 * q.array()).matrix();
}

double log_density(const Gaussian& g, const Vector& x) {
  require_same_dim(g.dim(), x.size(), "log_density point");
  return log_density_rows(g, x.transpose())(0);
}

double mahalanobis(const Gaussian& g, const Vector& x) {
  require_same_dim(g.dim(), x.size(), "mahalanobis point");
  require_well_conditioned(g);
  Matrix centered = x - g.mean();
  return std::sqrt(whitened_sq_norms(g.factor(), std::move(centered))(0));
}

double radius(const Gaussian& g) { return std::sqrt(g.factor().trace()); }

double pairwise_separation(const Gaussian& a, const Gaussian& b) {
  require_same_dim(a.dim(), b.dim(), "pairwise_separation");
  const double scale = std::sqrt(std::max(a.factor().trace(), b.factor().trace()));
  return (a.mean() - b.mean()).norm() / scale;
}

double mixture_separation(const Mixture& m) {
  if (m.size() < 2) throw Error(ErrorKind::TooFewComponents, "separation needs two components");
  double best = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < m.size(); ++i) {
    for (Index j = i + 1; j < m.size(); ++j) {
      best = std::min(best, pairwise_separation(m.component(i), m.component(j)));
    }
  }
  return best;
}

LabeledSample sample_labeled(const Mixture& m, Index count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorKind::BadSpec, "sample count must be positive");
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Index k = m.size();
  const Index n = m.dim();
  std::vector<double> cumulative(static_cast<std::size_t>(k));
  double acc = 0.0;
  for (Index i = 0; i < k; ++i) {
    acc += m.weight(i);
    cumulative[static_cast<std::size_t>(i)] = acc;
  }

  LabeledSample out;
  out.components.resize(static_cast<std::size_t>(count));
  for (auto& label : out.components) {
    const double u = uniform(rng) * acc;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    label = static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(), k - 1));
  }

  // Row-major fill keeps the draw order independent of the component layout.
  Matrix z(count, n);
  for (Index r = 0; r < count; ++r) {
    for (Index j = 0; j < n; ++j) z(r, j) = normal(rng);
  }

  out.points.resize(count, n);
  for (Index i = 0; i < k; ++i) {
    std::vector<Index> rows;
    for (Index r = 0; r < count; ++r) {
      if (out.components[static_cast<std::size_t>(r)] == i) rows.push_back(r);
    }
    if (rows.empty()) continue;
    const Gaussian& g = m.component(i);
    Matrix block(static_cast<Index>(rows.size()), n);
    for (std::size_t t = 0; t < rows.size(); ++t) block.row(static_cast<Index>(t)) = z.row(rows[t]);
    if (g.factor().is_diagonal()) {
      block.array().rowwise() *= g.factor().cholesky_lower().diagonal().transpose().array();
    } else {
      block = block * g.factor().cholesky_lower().transpose();
    }
    block.rowwise() += g.mean().transpose();
    for (std::size_t t = 0; t < rows.size(); ++t) out.points.row(rows[t]) = block.row(static_cast<Index>(t));
  }
  return out;
}

Dataset sample(const Mixture& m, Index count, std::uint64_t seed) {
  return sample_labeled(m, count, seed).points;
}

double norm_tail_bound(Index n, double eps) {
  return 2.0 * std::exp(-static_cast<double>(n) * eps * eps / 24.0);
}

}  // namespace rpmix
