#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "rpmix/gaussian.hpp"
#include "rpmix/projection.hpp"

namespace rpmix {

enum class CovarianceRestriction { FullDistinct, SharedFull };

std::string_view to_string(CovarianceRestriction r);
CovarianceRestriction restriction_from_string(std::string_view name);

/// m x k posterior component probabilities ("fractional labels").
using Responsibilities = Eigen::MatrixXd;

struct EmOptions {
  double tol = 1e-5;  // relative train log-likelihood improvement
  int max_iter = 500;
  // Adds ridge * trace(Sigma) / n * I to every estimated covariance. Off by default.
  double ridge = 0.0;
  // EmptyComponent rescues allowed per run before the error propagates.
  int max_rescues = 2;
};

struct FitResult {
  Mixture model;
  int iterations = 0;
  // Train log-likelihood of the initial model and after every iteration.
  std::vector<double> loglik_trace;
  bool converged = false;
  int rescues = 0;
};

struct EStepResult {
  Responsibilities resp;
  double loglik = 0.0;
  Vector row_loglik;  // log sum_i w_i p_i(x_r)
};

/// Weights 1/k, centers drawn without replacement from the rows of `data`,
/// spherical covariances sigma_i^2 I with sigma_i^2 = min_{j != i} |mu_j - mu_i|^2 / (2n).
/// SharedFull uses the smallest sigma_i^2 for every component.
Mixture init_params(const Dataset& data, Index k, CovarianceRestriction restriction,
                    std::uint64_t seed);

EStepResult e_step(const Mixture& model, const Dataset& data);

Mixture m_step(const Responsibilities& resp, const Dataset& data,
               CovarianceRestriction restriction, double ridge = 0.0);

FitResult run_em(const Dataset& data, Index k, CovarianceRestriction restriction,
                 std::uint64_t seed, const EmOptions& options = {});

/// Iterates from an explicit starting model instead of init_params.
FitResult run_em_from(const Mixture& start, const Dataset& data,
                      CovarianceRestriction restriction, const EmOptions& options = {});

struct RpEmSeeds {
  std::uint64_t projection;
  std::uint64_t init;
};
RpEmSeeds rp_em_seeds(std::uint64_t seed);

struct RpEmResult {
  FitResult high;  // lifted model after the high-dimensional step(s)
  ProjectionMatrix projection;
  FitResult low;   // EM run on the projected data
};

/// Project, run EM to convergence in d dimensions, lift the final
/// responsibilities onto the original data with one M-step, then take
/// `high_steps` full EM iterations in the original space (one by default).
RpEmResult rp_em(const Dataset& train, Index k, Index d, CovarianceRestriction restriction,
                 std::uint64_t seed, const EmOptions& options = {}, int high_steps = 1);

/// Log-likelihood of held-out data; 0 for an empty set.
double test_loglik(const Mixture& model, const Dataset& test);

struct RecoveryResult {
  bool success = false;
  // matched_errors[j] = distance from truth center j to its matched estimate.
  Vector matched_errors;
  std::vector<int> assignment;  // assignment[j] = estimated component index
};

/// Success iff some one-to-one matching puts every estimated center within
/// radius(truth_j) / 3 of its true center.
RecoveryResult centers_recovered(const Mixture& model, const Mixture& truth);

}  // namespace rpmix
