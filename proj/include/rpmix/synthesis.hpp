#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "rpmix/gaussian.hpp"

namespace rpmix {

enum class CovarianceMode { SphericalShared, DiagonalDistinct, RotatedDistinct, FullShared };

std::string_view to_string(CovarianceMode mode);
CovarianceMode covariance_mode_from_string(std::string_view name);

/// Parameters of a synthetic test mixture.
struct MixtureSpec {
  Index n = 50;
  Index k = 5;
  double c = 1.0;
  double eccentricity = 1.0;
  CovarianceMode mode = CovarianceMode::SphericalShared;
  std::uint64_t seed = 0;
};

/// Covariance whose eigenvalue square roots are 1, E and n-2 draws from
/// U[1, E]; the two endpoints land at random positions.
Matrix eccentric_covariance(Index n, double eccentricity, CovarianceMode mode, std::uint64_t seed);

/// k centers with |mu_i - mu_j| = c * max(radius_i, radius_j) for every pair,
/// embedded in a random (k-1)-dimensional subspace of R^n. Requires k <= n+1.
std::vector<Vector> packed_centers(Index k, Index n, double c, const std::vector<double>& radii,
                                   std::uint64_t seed);

/// k draws from U[1/(2k), 3/(2k)], renormalized to sum to one.
Vector mixing_weights(Index k, std::uint64_t seed);

Mixture make_mixture(const MixtureSpec& spec);

}  // namespace rpmix
