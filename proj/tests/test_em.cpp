#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include <Eigen/QR>

#include "oracles.hpp"
#include "rpmix/em.hpp"
#include "rpmix/error.hpp"
#include "rpmix/random.hpp"
#include "rpmix/synthesis.hpp"

using namespace rpmix;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an rpmix::Error");
  return ErrorKind::IoError;
}

Mixture two_point_model(double m0, double v0, double m1, double v1, double w0) {
  return Mixture({Gaussian(Vector::Constant(1, m0), Matrix::Constant(1, 1, v0)),
                  Gaussian(Vector::Constant(1, m1), Matrix::Constant(1, 1, v1))},
                 Eigen::Vector2d(w0, 1.0 - w0));
}

Matrix rotation(Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g(i, j) = normal(rng);
  return Eigen::HouseholderQR<Matrix>(g).householderQ();
}

}  // namespace

TEST_CASE("init from two points") {
  Dataset data(2, 3);
  data << 0, 0, 0, 1, 2, 2;
  const Mixture m = init_params(data, 2, CovarianceRestriction::FullDistinct, 5);
  const double expected = 9.0 / 6.0;
  for (Index i = 0; i < 2; ++i) {
    CHECK(m.weight(i) == 0.5);
    CHECK((m.component(i).covariance() - expected * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("init weights are uniform and shared variance is the minimum") {
  const Mixture truth = make_mixture(MixtureSpec{6, 4, 1.0, 1.0, CovarianceMode::SphericalShared, 2});
  const Dataset data = sample(truth, 200, 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Mixture full = init_params(data, 4, CovarianceRestriction::FullDistinct, seed);
    const Mixture shared = init_params(data, 4, CovarianceRestriction::SharedFull, seed);
    double smallest = INFINITY;
    for (Index i = 0; i < 4; ++i) {
      CHECK(full.weight(i) == 0.25);
      CHECK(full.component(i).mean() == shared.component(i).mean());
      smallest = std::min(smallest, full.component(i).covariance()(0, 0));
    }
    CHECK(shared.component(0).covariance()(0, 0) == smallest);
    CHECK(shared.component(0).shared_covariance() == shared.component(3).shared_covariance());
  }
}

TEST_CASE("init picks distinct rows as centers") {
  Dataset data(5, 1);
  data << 1, 2, 3, 4, 5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Mixture m = init_params(data, 5, CovarianceRestriction::FullDistinct, seed);
    std::set<double> seen;
    for (Index i = 0; i < 5; ++i) seen.insert(m.component(i).mean()(0));
    CHECK(seen.size() == 5);
  }
}

TEST_CASE("init errors") {
  CHECK(kind_of([] { init_params(Dataset::Zero(2, 3), 3, CovarianceRestriction::FullDistinct, 0); }) ==
        ErrorKind::NotEnoughData);
  CHECK(kind_of([] { init_params(Dataset::Ones(4, 3), 2, CovarianceRestriction::FullDistinct, 0); }) ==
        ErrorKind::DuplicatePoints);
}

TEST_CASE("e_step with one component") {
  const Mixture m({Gaussian(Vector::Zero(2), Matrix::Identity(2, 2))}, Vector::Ones(1));
  const EStepResult r = e_step(m, Dataset::Random(6, 2));
  CHECK(r.resp == Matrix::Ones(6, 1));
}

TEST_CASE("e_step splits an equidistant point evenly") {
  const EStepResult r = e_step(two_point_model(-1.0, 1.0, 1.0, 1.0, 0.5), Dataset::Zero(1, 1));
  CHECK(r.resp(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.resp(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("e_step matches a hand-computed posterior") {
  const Mixture m = two_point_model(0.0, 1.0, 3.0, 4.0, 0.3);
  Dataset x(3, 1);
  x << -0.5, 1.25, 4.0;
  const EStepResult r = e_step(m, x);
  double total = 0.0;
  for (Index i = 0; i < 3; ++i) {
    const double a = 0.3 * std::exp(oracle::normal_log_pdf(x(i, 0), 0.0, 1.0));
    const double b = 0.7 * std::exp(oracle::normal_log_pdf(x(i, 0), 3.0, 4.0));
    CHECK(std::abs(r.resp(i, 0) - a / (a + b)) <= 1e-12);
    CHECK(std::abs(r.resp(i, 1) - b / (a + b)) <= 1e-12);
    total += std::log(a + b);
  }
  CHECK(r.loglik == doctest::Approx(total).epsilon(1e-13));
}

TEST_CASE("e_step survives far-out points") {
  Dataset x(1, 1);
  x << 1e4;
  const EStepResult r = e_step(two_point_model(0.0, 1.0, 1.0, 1.0, 0.5), x);
  CHECK(std::isfinite(r.loglik));
  CHECK(r.resp(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("m_step with hard labels gives classical estimates") {
  Dataset x(6, 2);
  x << 0, 0, 2, 0, 1, 3, 10, 10, 12, 14, 11, 16;
  Responsibilities r = Responsibilities::Zero(6, 2);
  r.block(0, 0, 3, 1).setOnes();
  r.block(3, 1, 3, 1).setOnes();
  const Mixture m = m_step(r, x, CovarianceRestriction::FullDistinct);
  CHECK((m.component(0).mean() - Eigen::Vector2d(1.0, 1.0)).norm() <= 1e-14);
  CHECK((m.component(1).mean() - Eigen::Vector2d(11.0, 40.0 / 3)).norm() <= 1e-14);
  Matrix s0(2, 2);
  s0 << 2.0 / 3, 0.0, 0.0, 2.0;
  CHECK((m.component(0).covariance() - s0).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(m.weight(0) == doctest::Approx(0.5));
}

TEST_CASE("m_step with equal responsibilities gives the global fit twice") {
  const Dataset x = Dataset::Random(30, 3);
  const Mixture m = m_step(Responsibilities::Constant(30, 2, 0.5), x, CovarianceRestriction::FullDistinct);
  const Vector mean = x.colwise().mean().transpose();
  const Dataset c = x.rowwise() - mean.transpose();
  const Matrix cov = c.transpose() * c / 30.0;
  for (Index i = 0; i < 2; ++i) {
    CHECK((m.component(i).mean() - mean).norm() <= 1e-13);
    CHECK((m.component(i).covariance() - cov).cwiseAbs().maxCoeff() <= 1e-13);
  }
}

TEST_CASE("m_step matches hand-computed weighted means") {
  Dataset x(4, 1);
  x << 1, 2, 4, 8;
  Responsibilities r(4, 2);
  r << 0.9, 0.1, 0.5, 0.5, 0.25, 0.75, 0.0, 1.0;
  const Mixture m = m_step(r, x, CovarianceRestriction::FullDistinct);
  const double m0 = (0.9 * 1 + 0.5 * 2 + 0.25 * 4) / 1.65;
  const double m1 = (0.1 * 1 + 0.5 * 2 + 0.75 * 4 + 8) / 2.35;
  CHECK(std::abs(m.component(0).mean()(0) - m0) <= 1e-12);
  CHECK(std::abs(m.component(1).mean()(0) - m1) <= 1e-12);
  CHECK(std::abs(m.weight(0) - 1.65 / 4) <= 1e-12);
  const double v0 = (0.9 * std::pow(1 - m0, 2) + 0.5 * std::pow(2 - m0, 2) + 0.25 * std::pow(4 - m0, 2)) / 1.65;
  CHECK(std::abs(m.component(0).covariance()(0, 0) - v0) <= 1e-12);
}

TEST_CASE("shared m_step pools scatter into one covariance") {
  const Dataset x = Dataset::Random(40, 3);
  Responsibilities r(40, 3);
  for (Index i = 0; i < 40; ++i) r.row(i) << 0.2 + 0.01 * i, 0.3, 0.5 - 0.01 * i;
  const Mixture m = m_step(r, x, CovarianceRestriction::SharedFull);
  CHECK(m.component(0).shared_covariance() == m.component(1).shared_covariance());
  CHECK(m.component(1).shared_covariance() == m.component(2).shared_covariance());
  Matrix pooled = Matrix::Zero(3, 3);
  for (Index i = 0; i < 3; ++i) {
    for (Index row = 0; row < 40; ++row) {
      const Vector d = x.row(row).transpose() - m.component(i).mean();
      pooled += r(row, i) * d * d.transpose();
    }
  }
  CHECK((m.component(0).covariance() - pooled / 40.0).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK(std::abs(m.weights().sum() - 1.0) <= 1e-12);
}

TEST_CASE("m_step reports empty components") {
  Responsibilities r = Responsibilities::Zero(10, 2);
  r.col(0).setOnes();
  CHECK(kind_of([&] { m_step(r, Dataset::Random(10, 2), CovarianceRestriction::FullDistinct); }) ==
        ErrorKind::EmptyComponent);
}

TEST_CASE("run_em recovers an easy pair") {
  const Mixture truth({Gaussian(Eigen::Vector2d(-5.0, 0.0), Matrix::Identity(2, 2)),
                       Gaussian(Eigen::Vector2d(5.0, 0.0), Matrix::Identity(2, 2))},
                      Eigen::Vector2d(0.5, 0.5));
  const Dataset data = sample(truth, 4000, 1);
  const FitResult fit = run_em(data, 2, CovarianceRestriction::FullDistinct, 3);
  CHECK(fit.converged);
  const RecoveryResult r = centers_recovered(fit.model, truth);
  CHECK(r.success);
  CHECK(r.matched_errors.maxCoeff() < 0.1);
}

TEST_CASE("run_em with one component stops within two iterations") {
  const Dataset data = Dataset::Random(100, 3);
  const FitResult fit = run_em(data, 1, CovarianceRestriction::FullDistinct, 0);
  CHECK(fit.converged);
  CHECK(fit.iterations <= 2);
  CHECK((fit.model.component(0).mean() - data.colwise().mean().transpose()).norm() <= 1e-12);
}

TEST_CASE("EM log-likelihood never decreases") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto restriction = seed % 2 ? CovarianceRestriction::SharedFull : CovarianceRestriction::FullDistinct;
    const Index n = 3 + static_cast<Index>(seed % 4);
    const Index k = 2 + static_cast<Index>(seed % 3);
    const Mixture truth = make_mixture(
        MixtureSpec{n, k, 0.5 + 0.1 * static_cast<double>(seed % 5), 1.0 + static_cast<double>(seed % 3),
                    n > 1 && seed % 3 ? CovarianceMode::RotatedDistinct : CovarianceMode::SphericalShared, seed});
    const Dataset data = sample(truth, 400, seed + 100);
    const FitResult fit = run_em(data, k, restriction, seed + 200);
    REQUIRE(fit.rescues == 0);
    for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t) {
      CHECK(fit.loglik_trace[t] >= fit.loglik_trace[t - 1] - 1e-7);
    }
    const EStepResult es = e_step(fit.model, data);
    CHECK((es.resp.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(es.resp.minCoeff() >= 0.0);
    CHECK(es.resp.maxCoeff() <= 1.0);
    CHECK(std::abs(fit.model.weights().sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("a converged model is a fixed point") {
  const Mixture truth = make_mixture(MixtureSpec{3, 2, 4.0, 2.0, CovarianceMode::RotatedDistinct, 5});
  const Dataset data = sample(truth, 500, 6);
  EmOptions tight;
  tight.tol = 1e-15;
  tight.max_iter = 5000;
  const FitResult fit = run_em(data, 2, CovarianceRestriction::FullDistinct, 1, tight);
  const Mixture again = m_step(e_step(fit.model, data).resp, data, CovarianceRestriction::FullDistinct);
  for (Index i = 0; i < 2; ++i) {
    CHECK((again.component(i).mean() - fit.model.component(i).mean()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((again.component(i).covariance() - fit.model.component(i).covariance()).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("EM is rotation equivariant") {
  const Mixture truth = make_mixture(MixtureSpec{5, 3, 1.0, 3.0, CovarianceMode::RotatedDistinct, 9});
  const Dataset data = sample(truth, 400, 2);
  const Matrix q = rotation(5, 4);
  const Dataset rotated = data * q.transpose();
  for (auto restriction : {CovarianceRestriction::FullDistinct, CovarianceRestriction::SharedFull}) {
    const FitResult a = run_em(data, 3, restriction, 7);
    const FitResult b = run_em(rotated, 3, restriction, 7);
    REQUIRE(a.loglik_trace.size() == b.loglik_trace.size());
    for (std::size_t t = 0; t < a.loglik_trace.size(); ++t) {
      CHECK(std::abs(a.loglik_trace[t] - b.loglik_trace[t]) <= 1e-6);
    }
    for (Index i = 0; i < 3; ++i) {
      CHECK((q * a.model.component(i).mean() - b.model.component(i).mean()).norm() <= 1e-6);
    }
  }
}

TEST_CASE("shared covariance stays shared through EM") {
  const Mixture truth = make_mixture(MixtureSpec{4, 3, 1.0, 1.0, CovarianceMode::SphericalShared, 1});
  const FitResult fit = run_em(sample(truth, 300, 2), 3, CovarianceRestriction::SharedFull, 3);
  CHECK(fit.model.component(0).shared_covariance() == fit.model.component(1).shared_covariance());
  CHECK(fit.model.component(0).covariance() == fit.model.component(2).covariance());
}

TEST_CASE("dead components are rescued") {
  const Mixture truth({Gaussian(Vector::Zero(2), Matrix::Identity(2, 2)),
                       Gaussian(Eigen::Vector2d(8.0, 0.0), Matrix::Identity(2, 2))},
                      Eigen::Vector2d(0.5, 0.5));
  const Dataset data = sample(truth, 300, 4);
  const Mixture start({Gaussian(Eigen::Vector2d(1.0, 0.0), Matrix::Identity(2, 2)),
                       Gaussian(Eigen::Vector2d(1e4, 1e4), Matrix::Identity(2, 2))},
                      Eigen::Vector2d(0.5, 0.5));
  const FitResult fit = run_em_from(start, data, CovarianceRestriction::FullDistinct);
  CHECK(fit.rescues >= 1);
  CHECK(centers_recovered(fit.model, truth).success);

  EmOptions none;
  none.max_rescues = 0;
  CHECK(kind_of([&] { run_em_from(start, data, CovarianceRestriction::FullDistinct, none); }) ==
        ErrorKind::EmptyComponent);
}

TEST_CASE("singular data surfaces as IllConditioned with the iteration") {
  Dataset data = Dataset::Random(60, 3);
  data.col(2) = data.col(0) + data.col(1);
  try {
    run_em(data, 2, CovarianceRestriction::FullDistinct, 1);
    FAIL("expected IllConditioned");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IllConditioned);
    CHECK(std::string(e.what()).find("iteration") != std::string::npos);
  }
}

TEST_CASE("rp_em structure and determinism") {
  const Mixture truth = make_mixture(MixtureSpec{40, 3, 1.0, 1.0, CovarianceMode::SphericalShared, 11});
  const Dataset data = sample(truth, 500, 12);
  const RpEmResult a = rp_em(data, 3, 10, CovarianceRestriction::SharedFull, 5);
  const RpEmResult b = rp_em(data, 3, 10, CovarianceRestriction::SharedFull, 5);
  CHECK(a.high.iterations == 1);
  CHECK(a.high.loglik_trace.size() == 2);
  CHECK(a.high.loglik_trace == b.high.loglik_trace);
  CHECK(a.low.loglik_trace == b.low.loglik_trace);
  CHECK(a.projection.rows() == b.projection.rows());
  CHECK(a.projection.target_dim() == 10);
  CHECK(a.low.model.dim() == 10);
  CHECK(a.high.model.dim() == 40);
  CHECK(a.high.loglik_trace[1] >= a.high.loglik_trace[0] - 1e-7);
  CHECK_THROWS_AS(rp_em(data, 3, 41, CovarianceRestriction::SharedFull, 5), Error);
}

TEST_CASE("rp_em with a square projection follows run_em on rotated data") {
  const Mixture truth = make_mixture(MixtureSpec{6, 3, 3.0, 2.0, CovarianceMode::RotatedDistinct, 3});
  const Dataset data = sample(truth, 1000, 4);
  const std::uint64_t seed = 19;
  const RpEmResult r = rp_em(data, 3, 6, CovarianceRestriction::FullDistinct, seed);
  const RpEmSeeds seeds = rp_em_seeds(seed);
  const FitResult direct = run_em(project_data(r.projection, data), 3, CovarianceRestriction::FullDistinct, seeds.init);
  CHECK(std::abs(direct.loglik_trace.back() - r.low.loglik_trace.back()) <= 1e-6);
  // The lifted model is exactly the next EM iterate in the rotated frame.
  const Mixture next =
      m_step(e_step(direct.model, project_data(r.projection, data)).resp, project_data(r.projection, data),
             CovarianceRestriction::FullDistinct);
  CHECK(std::abs(test_loglik(next, project_data(r.projection, data)) - r.high.loglik_trace.front()) <= 1e-6);
}

TEST_CASE("test log-likelihood") {
  const Mixture truth = make_mixture(MixtureSpec{5, 3, 2.0, 1.0, CovarianceMode::SphericalShared, 4});
  const Dataset test = sample(truth, 300, 5);
  const FitResult single = run_em(sample(truth, 300, 6), 1, CovarianceRestriction::FullDistinct, 1);
  CHECK(test_loglik(truth, test) >= test_loglik(single.model, test));
  Dataset doubled(600, 5);
  doubled << test, test;
  CHECK(test_loglik(truth, doubled) == doctest::Approx(2.0 * test_loglik(truth, test)).epsilon(1e-14));
  CHECK(test_loglik(truth, Dataset(0, 5)) == 0.0);
}

TEST_CASE("centers_recovered basics") {
  const Mixture truth = make_mixture(MixtureSpec{10, 3, 1.0, 1.0, CovarianceMode::SphericalShared, 1});
  const RecoveryResult self = centers_recovered(truth, truth);
  CHECK(self.success);
  CHECK(self.matched_errors.isZero(0.0));

  std::vector<Gaussian> shifted = truth.components();
  Vector mean = shifted[1].mean();
  mean(0) += 0.4 * radius(truth.component(1));
  shifted[1] = Gaussian(mean, shifted[1].shared_covariance());
  CHECK(!centers_recovered(Mixture(shifted, truth.weights()), truth).success);

  std::vector<Gaussian> swapped = {truth.component(2), truth.component(1), truth.component(0)};
  const RecoveryResult r = centers_recovered(Mixture(swapped, truth.weights()), truth);
  CHECK(r.success);
  CHECK(r.assignment == std::vector<int>{2, 1, 0});

  const Mixture two = make_mixture(MixtureSpec{10, 2, 1.0, 1.0, CovarianceMode::SphericalShared, 1});
  CHECK(kind_of([&] { centers_recovered(two, truth); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("centers_recovered agrees with brute force on every permutation for k <= 4") {
  Rng rng(42);
  std::normal_distribution<double> noise;
  for (Index k = 1; k <= 4; ++k) {
    const Index n = 6;
    std::vector<Gaussian> truth_components;
    for (Index j = 0; j < k; ++j) {
      Vector mu = Vector::Zero(n);
      mu(j) = 3.0;
      truth_components.emplace_back(mu, (0.5 + 0.25 * static_cast<double>(j)) * Matrix::Identity(n, n));
    }
    const Mixture truth(truth_components, Vector::Constant(k, 1.0 / static_cast<double>(k)));
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      for (double scale : {0.05, 0.3, 0.6}) {
        std::vector<Gaussian> est;
        std::vector<Vector> est_means, truth_means;
        std::vector<double> limits;
        for (Index i = 0; i < k; ++i) {
          Vector mu = truth.component(perm[static_cast<std::size_t>(i)]).mean();
          for (Index c = 0; c < n; ++c) mu(c) += scale * noise(rng);
          est.emplace_back(mu, Matrix::Identity(n, n));
          est_means.push_back(mu);
        }
        for (Index j = 0; j < k; ++j) {
          truth_means.push_back(truth.component(j).mean());
          limits.push_back(radius(truth.component(j)) / 3.0);
        }
        const bool brute = oracle::best_ratio(est_means, truth_means, limits) <= 1.0;
        CHECK(centers_recovered(Mixture(est, truth.weights()), truth).success == brute);
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST_CASE("restriction names round-trip") {
  CHECK(restriction_from_string(to_string(CovarianceRestriction::SharedFull)) == CovarianceRestriction::SharedFull);
  CHECK(restriction_from_string(to_string(CovarianceRestriction::FullDistinct)) == CovarianceRestriction::FullDistinct);
  CHECK_THROWS_AS(restriction_from_string("Diagonal"), Error);
}
