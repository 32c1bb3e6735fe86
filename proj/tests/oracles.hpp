#pragma once

// Reference computations that take a different route from the library:
// explicit inverses and determinants, scalar formulas, brute force.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double normal_log_pdf(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

// Dense route through an LU inverse and determinant.
inline double gaussian_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                               const Eigen::MatrixXd& cov) {
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
  const Eigen::VectorXd diff = x - mean;
  const double quad = diff.dot(lu.inverse() * diff);
  return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) -
         0.5 * std::log(lu.determinant()) - 0.5 * quad;
}

// Hand-rolled symmetric Jacobi eigenvalues, ascending.
inline Eigen::VectorXd jacobi_eigenvalues(Eigen::MatrixXd a) {
  const auto n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  Eigen::VectorXd out = a.diagonal();
  std::sort(out.data(), out.data() + out.size());
  return out;
}

// Minimum over all permutations of the largest ratio dist(est[perm[j]], truth[j]) / limit[j].
inline double best_ratio(const std::vector<Eigen::VectorXd>& est, const std::vector<Eigen::VectorXd>& truth,
                         const std::vector<double>& limit) {
  std::vector<int> perm(est.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double worst = 0.0;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      worst = std::max(worst, (est[static_cast<std::size_t>(perm[j])] - truth[j]).norm() / limit[j]);
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace oracle
