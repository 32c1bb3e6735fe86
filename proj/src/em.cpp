#include "rpmix/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "rpmix/error.hpp"
#include "rpmix/random.hpp"

namespace rpmix {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr double kEmptyFraction = 1e-10;

constexpr std::uint64_t kProjectionStream = 0;
constexpr std::uint64_t kInitStream = 1;

Error at_iteration(const Error& e, int iteration, std::string_view stage) {
  // A singular estimate is the limiting case of an ill-conditioned one; EM
  // callers only need to know the fit broke down numerically.
  const ErrorKind kind =
      e.kind() == ErrorKind::NotPositiveDefinite ? ErrorKind::IllConditioned : e.kind();
  std::ostringstream msg;
  msg << e.detail() << " (" << stage << ", iteration " << iteration << ")";
  return Error(kind, msg.str());
}

// Index of the first column whose effective count is below the empty cutoff, or -1.
Index find_empty_component(const Responsibilities& resp) {
  const double floor = kEmptyFraction * static_cast<double>(resp.rows());
  const Vector counts = resp.colwise().sum().transpose();
  for (Index i = 0; i < counts.size(); ++i) {
    if (!(counts(i) >= floor)) return i;
  }
  return -1;
}

Matrix weighted_scatter(const Dataset& data, const Vector& weights, const Vector& mean) {
  Matrix centered = data.rowwise() - mean.transpose();
  centered.array().colwise() *= weights.array().sqrt();
  Matrix s = centered.transpose() * centered;
  return 0.5 * (s + s.transpose());
}

void add_ridge(Matrix& cov, double ridge) {
  if (ridge > 0.0) {
    cov.diagonal().array() += ridge * cov.trace() / static_cast<double>(cov.rows());
  }
}

// Replace dead component `dead` by a fresh one centered on the worst-explained
// point; the rest come from an M-step on the remaining responsibilities.
Mixture rescue_component(const EStepResult& es, const Dataset& data, Index dead,
                         CovarianceRestriction restriction, double ridge) {
  const Index k = es.resp.cols();
  Responsibilities reduced(es.resp.rows(), k - 1);
  for (Index i = 0, c = 0; i < k; ++i) {
    if (i != dead) reduced.col(c++) = es.resp.col(i);
  }
  const Vector sums = reduced.rowwise().sum();
  reduced.array().colwise() /= sums.array();
  const Mixture rest = m_step(reduced, data, restriction, ridge);

  Index worst = 0;
  es.row_loglik.minCoeff(&worst);
  std::shared_ptr<const Covariance> cov;
  if (restriction == CovarianceRestriction::SharedFull) {
    cov = rest.component(0).shared_covariance();
  } else {
    Matrix global = weighted_scatter(data, Vector::Ones(data.rows()), data.colwise().mean().transpose()) /
                    static_cast<double>(data.rows());
    add_ridge(global, ridge);
    cov = std::make_shared<const Covariance>(std::move(global));
  }

  const double fresh = 1.0 / static_cast<double>(k);
  std::vector<Gaussian> components;
  Vector weights(k);
  for (Index i = 0, c = 0; i < k; ++i) {
    if (i == dead) {
      components.emplace_back(data.row(worst).transpose(), cov);
      weights(i) = fresh;
    } else {
      components.push_back(rest.component(c));
      weights(i) = rest.weight(c) * (1.0 - fresh);
      ++c;
    }
  }
  return Mixture(std::move(components), weights / weights.sum());
}

}  // namespace

std::string_view to_string(CovarianceRestriction r) {
  return r == CovarianceRestriction::SharedFull ? "SharedFull" : "FullDistinct";
}

CovarianceRestriction restriction_from_string(std::string_view name) {
  if (name == "SharedFull") return CovarianceRestriction::SharedFull;
  if (name == "FullDistinct") return CovarianceRestriction::FullDistinct;
  throw Error(ErrorKind::ParseError, "unknown covariance restriction '" + std::string(name) + "'");
}

Mixture init_params(const Dataset& data, Index k, CovarianceRestriction restriction,
                    std::uint64_t seed) {
  const Index m = data.rows();
  const Index n = data.cols();
  if (k < 1) throw Error(ErrorKind::BadSpec, "need at least one component");
  if (m < k) {
    std::ostringstream msg;
    msg << "need at least " << k << " rows to pick initial centers, got " << m;
    throw Error(ErrorKind::NotEnoughData, msg.str());
  }

  Rng rng(seed);
  std::vector<Index> rows(static_cast<std::size_t>(m));
  std::iota(rows.begin(), rows.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, m - 1);
    std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick(rng))]);
  }

  std::vector<Vector> centers;
  for (Index i = 0; i < k; ++i) centers.push_back(data.row(rows[static_cast<std::size_t>(i)]).transpose());

  const double two_n = 2.0 * static_cast<double>(n);
  std::vector<double> variances(static_cast<std::size_t>(k));
  if (k == 1) {
    // No other center to measure against: use the average per-coordinate spread.
    const Dataset centered = data.rowwise() - data.colwise().mean();
    variances[0] = centered.squaredNorm() / (static_cast<double>(m) * static_cast<double>(n));
  } else {
    for (std::size_t i = 0; i < centers.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < centers.size(); ++j) {
        if (i != j) best = std::min(best, (centers[j] - centers[i]).squaredNorm());
      }
      variances[i] = best / two_n;
    }
  }
  for (double v : variances) {
    if (!(v > 0.0)) throw Error(ErrorKind::DuplicatePoints, "initial centers coincide");
  }

  std::vector<Gaussian> components;
  if (restriction == CovarianceRestriction::SharedFull) {
    const double shared = *std::min_element(variances.begin(), variances.end());
    auto cov = std::make_shared<const Covariance>(shared * Matrix::Identity(n, n));
    for (const auto& c : centers) components.emplace_back(c, cov);
  } else {
    for (std::size_t i = 0; i < centers.size(); ++i) {
      components.emplace_back(centers[i], variances[i] * Matrix::Identity(n, n));
    }
  }
  return Mixture(std::move(components), Vector::Constant(k, 1.0 / static_cast<double>(k)));
}

EStepResult e_step(const Mixture& model, const Dataset& data) {
  require_same_dim(model.dim(), data.cols(), "e_step data");
  const Index m = data.rows();
  const Index k = model.size();
  const double base = -0.5 * static_cast<double>(model.dim()) * kLog2Pi;

  Matrix log_joint(m, k);
  // Whiten the data once per distinct covariance.
  std::map<const Covariance*, Matrix> whitened;
  for (Index i = 0; i < k; ++i) {
    const Gaussian& g = model.component(i);
    const Covariance& cov = g.factor();
    if (cov.condition_number() >= kMaxConditionNumber) {
      std::ostringstream msg;
      msg << "component " << i << " covariance condition number " << cov.condition_number();
      throw Error(ErrorKind::IllConditioned, msg.str());
    }
    auto [it, inserted] = whitened.try_emplace(&cov);
    if (inserted) {
      it->second = data.transpose();
      cov.cholesky_lower().triangularView<Eigen::Lower>().solveInPlace(it->second);
    }
    const Vector mean_w = cov.cholesky_lower().triangularView<Eigen::Lower>().solve(g.mean());
    const Vector q = (it->second.colwise() - mean_w).colwise().squaredNorm().transpose();
    log_joint.col(i) =
        (std::log(model.weight(i)) + base - 0.5 * cov.log_det() - 0.5 * q.array()).matrix();
  }

  EStepResult out;
  const Vector row_max = log_joint.rowwise().maxCoeff();
  Matrix shifted = log_joint.colwise() - row_max;
  out.resp = shifted.array().exp().matrix();
  const Vector sums = out.resp.rowwise().sum();
  out.resp.array().colwise() /= sums.array();
  out.row_loglik = row_max + sums.array().log().matrix();
  out.loglik = out.row_loglik.sum();
  return out;
}

Mixture m_step(const Responsibilities& resp, const Dataset& data,
               CovarianceRestriction restriction, double ridge) {
  if (resp.rows() != data.rows() || resp.cols() < 1) {
    throw Error(ErrorKind::ShapeMismatch, "responsibilities must have one row per data point");
  }
  const Index m = data.rows();
  const Index k = resp.cols();
  const Index n = data.cols();
  const Vector counts = resp.colwise().sum().transpose();
  if (const Index dead = find_empty_component(resp); dead >= 0) {
    std::ostringstream msg;
    msg << "component " << dead << " has effective count " << counts(dead);
    throw Error(ErrorKind::EmptyComponent, msg.str());
  }

  Vector weights = counts / static_cast<double>(m);
  weights /= weights.sum();
  Matrix means = resp.transpose() * data;
  means.array().colwise() /= counts.array();

  std::vector<Gaussian> components;
  if (restriction == CovarianceRestriction::SharedFull) {
    Matrix pooled = Matrix::Zero(n, n);
    for (Index i = 0; i < k; ++i) pooled += weighted_scatter(data, resp.col(i), means.row(i).transpose());
    pooled /= static_cast<double>(m);
    add_ridge(pooled, ridge);
    auto cov = std::make_shared<const Covariance>(std::move(pooled));
    for (Index i = 0; i < k; ++i) components.emplace_back(means.row(i).transpose(), cov);
  } else {
    for (Index i = 0; i < k; ++i) {
      Matrix cov = weighted_scatter(data, resp.col(i), means.row(i).transpose()) / counts(i);
      add_ridge(cov, ridge);
      components.emplace_back(means.row(i).transpose(), std::move(cov));
    }
  }
  return Mixture(std::move(components), weights);
}

FitResult run_em_from(const Mixture& start, const Dataset& data,
                      CovarianceRestriction restriction, const EmOptions& options) {
  FitResult fit{start, 0, {}, false, 0};
  EStepResult es;
  try {
    es = e_step(fit.model, data);
  } catch (const Error& e) {
    throw at_iteration(e, 0, "initial E-step");
  }
  fit.loglik_trace.push_back(es.loglik);

  while (fit.iterations < options.max_iter) {
    if (const Index dead = find_empty_component(es.resp); dead >= 0) {
      if (fit.rescues >= options.max_rescues) {
        std::ostringstream msg;
        msg << "component " << dead << " emptied after " << fit.rescues << " rescues";
        throw at_iteration(Error(ErrorKind::EmptyComponent, msg.str()), fit.iterations, "M-step");
      }
      try {
        fit.model = rescue_component(es, data, dead, restriction, options.ridge);
        es = e_step(fit.model, data);
      } catch (const Error& e) {
        throw at_iteration(e, fit.iterations, "rescue");
      }
      ++fit.rescues;
      fit.loglik_trace.push_back(es.loglik);
      continue;
    }

    const double previous = es.loglik;
    try {
      fit.model = m_step(es.resp, data, restriction, options.ridge);
      ++fit.iterations;
      es = e_step(fit.model, data);
    } catch (const Error& e) {
      throw at_iteration(e, fit.iterations, "EM step");
    }
    fit.loglik_trace.push_back(es.loglik);
    if (es.loglik - previous < options.tol * std::abs(previous)) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

FitResult run_em(const Dataset& data, Index k, CovarianceRestriction restriction,
                 std::uint64_t seed, const EmOptions& options) {
  return run_em_from(init_params(data, k, restriction, seed), data, restriction, options);
}

RpEmSeeds rp_em_seeds(std::uint64_t seed) {
  return {derive_seed(seed, kProjectionStream), derive_seed(seed, kInitStream)};
}

RpEmResult rp_em(const Dataset& train, Index k, Index d, CovarianceRestriction restriction,
                 std::uint64_t seed, const EmOptions& options, int high_steps) {
  if (d > train.cols()) throw Error(ErrorKind::BadDims, "projected dimension exceeds data dimension");
  const RpEmSeeds seeds = rp_em_seeds(seed);
  ProjectionMatrix projection = random_orthonormal(train.cols(), d, seeds.projection);
  const Dataset low_data = project_data(projection, train);
  FitResult low = run_em(low_data, k, restriction, seeds.init, options);

  FitResult high{low.model, 0, {}, low.converged, 0};
  try {
    const EStepResult labels = e_step(low.model, low_data);
    high.model = m_step(labels.resp, train, restriction, options.ridge);
  } catch (const Error& e) {
    throw at_iteration(e, 0, "lifting low-dimensional labels");
  }
  try {
    EStepResult es = e_step(high.model, train);
    high.loglik_trace.push_back(es.loglik);
    for (int step = 0; step < high_steps; ++step) {
      high.model = m_step(es.resp, train, restriction, options.ridge);
      ++high.iterations;
      es = e_step(high.model, train);
      high.loglik_trace.push_back(es.loglik);
    }
  } catch (const Error& e) {
    throw at_iteration(e, high.iterations, "high-dimensional step");
  }
  return RpEmResult{std::move(high), std::move(projection), std::move(low)};
}

double test_loglik(const Mixture& model, const Dataset& test) {
  if (test.rows() == 0) return 0.0;
  return e_step(model, test).loglik;
}

RecoveryResult centers_recovered(const Mixture& model, const Mixture& truth) {
  const Index k = truth.size();
  if (model.size() != k || model.dim() != truth.dim()) {
    throw Error(ErrorKind::ShapeMismatch, "model and truth differ in component count or dimension");
  }
  if (k > 10) throw Error(ErrorKind::BadSpec, "exhaustive center matching supports k <= 10");

  Matrix dist(k, k);  // dist(j, i): truth j to estimate i
  Vector threshold(k);
  for (Index j = 0; j < k; ++j) {
    threshold(j) = radius(truth.component(j)) / 3.0;
    for (Index i = 0; i < k; ++i) {
      dist(j, i) = (model.component(i).mean() - truth.component(j).mean()).norm();
    }
  }

  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best_perm = perm;
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (Index j = 0; j < k; ++j) {
      worst = std::max(worst, dist(j, perm[static_cast<std::size_t>(j)]) / threshold(j));
    }
    if (worst < best) {
      best = worst;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  RecoveryResult out;
  out.success = best <= 1.0;
  out.assignment = best_perm;
  out.matched_errors.resize(k);
  for (Index j = 0; j < k; ++j) out.matched_errors(j) = dist(j, best_perm[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace rpmix
