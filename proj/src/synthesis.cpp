#include "rpmix/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/QR>

#include "rpmix/error.hpp"
#include "rpmix/projection.hpp"
#include "rpmix/random.hpp"

namespace rpmix {

namespace {

// Stream ids under a MixtureSpec seed.
constexpr std::uint64_t kCentersStream = 2;
constexpr std::uint64_t kWeightsStream = 3;
constexpr std::uint64_t kCovarianceStream = 10;

constexpr double kPackingTolerance = 1e-9;

bool is_shared(CovarianceMode mode) {
  return mode == CovarianceMode::SphericalShared || mode == CovarianceMode::FullShared;
}

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
// of R's diagonal folded into Q.
Matrix random_rotation(Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix& r = qr.matrixQR();
  for (Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

}  // namespace

std::string_view to_string(CovarianceMode mode) {
  switch (mode) {
    case CovarianceMode::SphericalShared: return "SphericalShared";
    case CovarianceMode::DiagonalDistinct: return "DiagonalDistinct";
    case CovarianceMode::RotatedDistinct: return "RotatedDistinct";
    case CovarianceMode::FullShared: return "FullShared";
  }
  return "Unknown";
}

CovarianceMode covariance_mode_from_string(std::string_view name) {
  if (name == "SphericalShared") return CovarianceMode::SphericalShared;
  if (name == "DiagonalDistinct") return CovarianceMode::DiagonalDistinct;
  if (name == "RotatedDistinct") return CovarianceMode::RotatedDistinct;
  if (name == "FullShared") return CovarianceMode::FullShared;
  throw Error(ErrorKind::ParseError, "unknown covariance mode '" + std::string(name) + "'");
}

Matrix eccentric_covariance(Index n, double eccentricity, CovarianceMode mode, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::BadDims, "dimension must be positive");
  if (!(eccentricity >= 1.0) || !std::isfinite(eccentricity)) {
    throw Error(ErrorKind::BadSpec, "eccentricity must be a finite value >= 1");
  }
  if (eccentricity > 1.0 && n < 2) {
    throw Error(ErrorKind::BadDims, "eccentricity > 1 needs at least two dimensions");
  }
  if (mode == CovarianceMode::SphericalShared && eccentricity != 1.0) {
    throw Error(ErrorKind::BadSpec, "spherical covariances have eccentricity 1");
  }
  if (eccentricity == 1.0) return Matrix::Identity(n, n);

  Rng rng(seed);
  std::uniform_int_distribution<Index> first(0, n - 1);
  std::uniform_int_distribution<Index> second(0, n - 2);
  const Index lo_pos = first(rng);
  Index hi_pos = second(rng);
  if (hi_pos >= lo_pos) ++hi_pos;

  std::uniform_real_distribution<double> root(1.0, eccentricity);
  Vector roots(n);
  for (Index i = 0; i < n; ++i) {
    roots(i) = (i == lo_pos) ? 1.0 : (i == hi_pos) ? eccentricity : root(rng);
  }
  const Vector eigenvalues = roots.array().square();

  if (mode == CovarianceMode::DiagonalDistinct) return eigenvalues.asDiagonal();

  const Matrix q = random_rotation(n, rng);
  Matrix cov = q * eigenvalues.asDiagonal() * q.transpose();
  return 0.5 * (cov + cov.transpose());
}

std::vector<Vector> packed_centers(Index k, Index n, double c, const std::vector<double>& radii,
                                   std::uint64_t seed) {
  if (k < 1) throw Error(ErrorKind::BadSpec, "need at least one center");
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw Error(ErrorKind::BadSeparation, "separation must be positive");
  }
  if (static_cast<Index>(radii.size()) != k) {
    throw Error(ErrorKind::ShapeMismatch, "one radius per center required");
  }
  for (double r : radii) {
    if (!(r > 0.0) || !std::isfinite(r)) throw Error(ErrorKind::BadSpec, "radii must be positive");
  }
  if (k > n + 1) {
    std::ostringstream msg;
    msg << "simplex packing of " << k << " centers needs n >= " << k - 1 << ", got " << n;
    throw Error(ErrorKind::TooManyComponents, msg.str());
  }
  if (k == 1) return {Vector::Zero(n)};

  // Place centers in order of increasing radius; each new center sits at
  // distance c * r_new from every earlier one, on a fresh axis above the
  // circumcenter of the earlier ones. Equal radii give a regular simplex.
  std::vector<std::size_t> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return radii[a] < radii[b]; });

  const Index dims = k - 1;
  Matrix placed = Matrix::Zero(k, dims);
  for (Index j = 1; j < k; ++j) {
    const double target = c * radii[order[static_cast<std::size_t>(j)]];
    Vector offset = Vector::Zero(dims);
    if (j > 1) {
      // Earlier points p_1..p_{j-1} relative to p_0 are lower triangular in
      // the first j-1 coordinates; solve 2 D y = |D_i|^2 for the circumcenter.
      const Index m = j - 1;
      Matrix diffs = placed.block(1, 0, m, m).rowwise() - placed.row(0).head(m);
      Vector rhs = 0.5 * diffs.rowwise().squaredNorm();
      offset.head(m) = diffs.triangularView<Eigen::Lower>().solve(rhs);
    }
    const double circum_sq = offset.squaredNorm();
    const double height_sq = target * target - circum_sq;
    if (!(height_sq > kPackingTolerance * target * target)) {
      throw Error(ErrorKind::BadSeparation, "pairwise separation constraints are infeasible");
    }
    placed.row(j) = placed.row(0) + offset.transpose();
    placed(j, j - 1) = std::sqrt(height_sq);
  }
  placed.rowwise() -= placed.colwise().mean();

  const ProjectionMatrix basis = random_orthonormal(n, dims, seed);
  std::vector<Vector> centers(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) {
    centers[order[static_cast<std::size_t>(j)]] = basis.rows().transpose() * placed.row(j).transpose();
  }

  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) {
      const auto a = static_cast<std::size_t>(i);
      const auto b = static_cast<std::size_t>(j);
      const double want = c * std::max(radii[a], radii[b]);
      const double got = (centers[a] - centers[b]).norm();
      if (std::abs(got - want) > 1e-6 * want) {
        throw Error(ErrorKind::BadSeparation, "packed centers failed verification");
      }
    }
  }
  return centers;
}

Vector mixing_weights(Index k, std::uint64_t seed) {
  if (k < 1) throw Error(ErrorKind::BadSpec, "need at least one weight");
  Rng rng(seed);
  const double kd = static_cast<double>(k);
  std::uniform_real_distribution<double> draw(1.0 / (2.0 * kd), 3.0 / (2.0 * kd));
  Vector w(k);
  for (Index i = 0; i < k; ++i) w(i) = draw(rng);
  return w / w.sum();
}

Mixture make_mixture(const MixtureSpec& spec) {
  if (spec.k < 2) throw Error(ErrorKind::TooFewComponents, "a mixture spec needs k >= 2");
  if (!(spec.c > 0.0)) throw Error(ErrorKind::BadSeparation, "separation must be positive");

  std::vector<std::shared_ptr<const Covariance>> covs;
  if (is_shared(spec.mode)) {
    auto shared = std::make_shared<const Covariance>(eccentric_covariance(
        spec.n, spec.eccentricity, spec.mode, derive_seed(spec.seed, kCovarianceStream)));
    covs.assign(static_cast<std::size_t>(spec.k), shared);
  } else {
    for (Index i = 0; i < spec.k; ++i) {
      covs.push_back(std::make_shared<const Covariance>(
          eccentric_covariance(spec.n, spec.eccentricity, spec.mode,
                               derive_seed(spec.seed, kCovarianceStream + static_cast<std::uint64_t>(i)))));
    }
  }

  std::vector<double> radii;
  for (const auto& cov : covs) radii.push_back(std::sqrt(cov->trace()));
  const auto centers =
      packed_centers(spec.k, spec.n, spec.c, radii, derive_seed(spec.seed, kCentersStream));

  std::vector<Gaussian> components;
  for (Index i = 0; i < spec.k; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    components.emplace_back(centers[idx], covs[idx]);
  }
  Mixture mixture(std::move(components), mixing_weights(spec.k, derive_seed(spec.seed, kWeightsStream)));

  const double achieved = mixture_separation(mixture);
  if (std::abs(achieved - spec.c) > 1e-6 * spec.c) {
    std::ostringstream msg;
    msg << "generated separation " << achieved << " differs from requested " << spec.c;
    throw Error(ErrorKind::BadSeparation, msg.str());
  }
  return mixture;
}

}  // namespace rpmix
