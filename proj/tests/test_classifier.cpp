#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "rpmix/classifier.hpp"
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

LabeledDataset parse(const std::string& text) {
  std::istringstream in(text);
  return ingest(in);
}

// Well separated classes, each a small mixture of its own.
LabeledDataset blobs(Index n, int classes, Index per_class, double spread, std::uint64_t seed) {
  Dataset points(classes * per_class, n);
  std::vector<int> labels;
  for (int c = 0; c < classes; ++c) {
    const Mixture m = make_mixture(MixtureSpec{n, 2, 1.0, 1.0, CovarianceMode::SphericalShared,
                                               derive_seed(seed, static_cast<std::uint64_t>(c))});
    Dataset pts = sample(m, per_class, derive_seed(seed, 50 + static_cast<std::uint64_t>(c)));
    pts.col(c % n).array() += spread * (1 + c / n);
    points.middleRows(c * per_class, per_class) = pts;
    labels.insert(labels.end(), static_cast<std::size_t>(per_class), c);
  }
  return make_labeled(points, labels);
}

}  // namespace

TEST_CASE("ingest reads label-first rows") {
  const LabeledDataset d = parse("3,0.5,1\n7,2,-1\n");
  CHECK(d.size() == 2);
  CHECK(d.dim() == 2);
  CHECK(d.labels == std::vector<int>{3, 7});
  CHECK(d.num_classes == 8);
  CHECK(d.points(1, 1) == -1.0);
  CHECK(d.class_counts()[3] == 1);
  CHECK(d.class_counts()[0] == 0);
}

TEST_CASE("ingest errors") {
  CHECK(kind_of([] { parse(""); }) == ErrorKind::ParseError);
  CHECK(kind_of([] { parse("1,2,3\n0,1\n"); }) == ErrorKind::InconsistentWidth);
  CHECK(kind_of([] { parse("a,2,3\n"); }) == ErrorKind::ParseError);
  CHECK(kind_of([] { parse("1,2,x\n"); }) == ErrorKind::ParseError);
  CHECK(kind_of([] { parse("1\n"); }) == ErrorKind::ParseError);
  CHECK(kind_of([] { ingest(std::filesystem::path("/nonexistent/digits.csv")); }) == ErrorKind::MissingData);
  try {
    parse("1,2,3\n0,1,2\n0,1\n");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("labeled CSV round-trips") {
  const LabeledDataset d = blobs(4, 3, 10, 5.0, 1);
  const auto path = std::filesystem::temp_directory_path() / "rpmix_labeled_roundtrip.csv";
  write_labeled_csv(path, d);
  const LabeledDataset back = ingest(path);
  std::filesystem::remove(path);
  CHECK(back.labels == d.labels);
  CHECK(back.points == d.points);
}

TEST_CASE("make_labeled validation") {
  CHECK(kind_of([] { make_labeled(Dataset::Zero(2, 2), {0}); }) == ErrorKind::ShapeMismatch);
  CHECK(kind_of([] { make_labeled(Dataset::Zero(1, 2), {-1}); }) == ErrorKind::BadSpec);
  CHECK(kind_of([] { make_labeled(Dataset::Zero(1, 2), {4}, 3); }) == ErrorKind::BadSpec);
}

TEST_CASE("separable classes are learned") {
  const LabeledDataset train_set = blobs(20, 3, 200, 30.0, 2);
  const LabeledDataset test_set = blobs(20, 3, 100, 30.0, 3);
  const ClassMixtureModel model = train(train_set, 10, 4, TrainOptions{2, true, {}});
  CHECK(model.per_class.size() == 3);
  CHECK(evaluate(model, train_set) > 0.95);
  CHECK(evaluate(model, test_set) > 0.95);
  CHECK(std::abs(model.class_priors.sum() - 1.0) <= 1e-12);
}

TEST_CASE("one component per class is a Gaussian classifier") {
  const LabeledDataset data = blobs(6, 2, 100, 20.0, 5);
  const ClassMixtureModel model = train(data, 6, 1, TrainOptions{1, true, {}});
  for (const auto& m : model.per_class) CHECK(m.size() == 1);
  CHECK(evaluate(model, data) > 0.95);
}

TEST_CASE("training errors") {
  const LabeledDataset data = blobs(6, 2, 4, 20.0, 5);
  CHECK(kind_of([&] { train(data, 3, 1, TrainOptions{5, true, {}}); }) == ErrorKind::ClassTooSmall);
  CHECK(kind_of([&] { train(data, 7, 1); }) == ErrorKind::BadDims);
}

TEST_CASE("classes without points are skipped") {
  LabeledDataset data = blobs(5, 2, 60, 20.0, 6);
  for (auto& l : data.labels) l = l == 1 ? 3 : l;
  data = make_labeled(data.points, data.labels);
  const ClassMixtureModel model = train(data, 5, 2, TrainOptions{2, true, {}});
  CHECK(model.per_class.size() == 2);
  for (int p : predict_all(model, data.points)) CHECK((p == 0 || p == 3));
}

TEST_CASE("ties go to the lower class") {
  const Mixture m({Gaussian(Vector::Zero(2), Matrix::Identity(2, 2))}, Vector::Ones(1));
  ClassMixtureModel model{ProjectionMatrix(Matrix::Identity(2, 2), ProjectionKind::OrthonormalRP),
                          {m, m, m},
                          Vector::Constant(3, 1.0 / 3.0),
                          true,
                          {1, 1, 1}};
  CHECK(predict(model, Vector::Zero(2)) == 0);
  CHECK(predict(model, Vector::Constant(2, 5.0)) == 0);
}

TEST_CASE("prediction picks the highest scoring component") {
  const LabeledDataset data = blobs(8, 3, 80, 15.0, 8);
  for (bool priors : {true, false}) {
    const ClassMixtureModel model = train(data, 6, 9, TrainOptions{2, priors, {}});
    const Dataset projected = project_data(model.projection, data.points);
    const auto predicted = predict_all(model, data.points);
    for (Index r = 0; r < projected.rows(); r += 7) {
      double best = -INFINITY;
      int owner = -1;
      for (std::size_t c = 0; c < model.per_class.size(); ++c) {
        const Mixture& mix = model.per_class[c];
        for (Index i = 0; i < mix.size(); ++i) {
          const double s = log_density(mix.component(i), projected.row(r).transpose()) + std::log(mix.weight(i)) +
                           (priors ? std::log(model.class_priors(static_cast<Index>(c))) : 0.0);
          if (s > best) {
            best = s;
            owner = static_cast<int>(c);
          }
        }
      }
      CHECK(predicted[static_cast<std::size_t>(r)] == owner);
    }
  }
}

TEST_CASE("training is deterministic") {
  const LabeledDataset data = blobs(10, 2, 50, 10.0, 3);
  const ClassMixtureModel a = train(data, 5, 17, TrainOptions{2, true, {}});
  const ClassMixtureModel b = train(data, 5, 17, TrainOptions{2, true, {}});
  CHECK(a.projection.rows() == b.projection.rows());
  CHECK(predict_all(a, data.points) == predict_all(b, data.points));
  CHECK(a.per_class[1].component(0).mean() == b.per_class[1].component(0).mean());
}

TEST_CASE("shuffled labels give chance accuracy") {
  LabeledDataset train_set = blobs(10, 4, 150, 0.0, 11);
  LabeledDataset test_set = blobs(10, 4, 150, 0.0, 12);
  Rng rng(3);
  std::shuffle(train_set.labels.begin(), train_set.labels.end(), rng);
  std::shuffle(test_set.labels.begin(), test_set.labels.end(), rng);
  const ClassMixtureModel model = train(train_set, 5, 1, TrainOptions{2, true, {}});
  CHECK(evaluate(model, test_set) < 0.4);
}

TEST_CASE("cluster analysis table") {
  const LabeledDataset data = blobs(12, 3, 120, 8.0, 4);
  const ClusterAnalysis a = cluster_analysis(data);
  CHECK(a.classes == std::vector<int>{0, 1, 2});
  CHECK(a.separation.isApprox(a.separation.transpose()));
  CHECK(a.separation.diagonal().isZero(0.0));
  CHECK(a.separation(0, 1) > 0.5);
  for (bool r : a.rank_deficient) CHECK(!r);

  const ClusterAnalysis low = cluster_analysis(data, random_orthonormal(12, 4, 3));
  for (Index i = 0; i < 3; ++i) CHECK(low.eccentricity(i) <= a.eccentricity(i) + 1e-12);

  std::ostringstream out;
  write_cluster_table(out, a);
  CHECK(out.str().rfind("class,0,1,2,eccentricity,rank_deficient\n", 0) == 0);
}

TEST_CASE("identical classes have zero separation") {
  Dataset pts = Dataset::Random(40, 3);
  Dataset both(80, 3);
  both << pts, pts;
  std::vector<int> labels(40, 0);
  labels.insert(labels.end(), 40, 1);
  const ClusterAnalysis a = cluster_analysis(make_labeled(both, labels));
  CHECK(a.separation(0, 1) == 0.0);
}

TEST_CASE("tiny classes are flagged rank deficient") {
  Dataset pts = Dataset::Random(8, 5);
  const ClusterAnalysis a = cluster_analysis(make_labeled(pts, {0, 0, 0, 1, 1, 1, 1, 1}));
  CHECK(a.rank_deficient[0]);
  CHECK(a.rank_deficient[1]);
  CHECK(std::isfinite(a.eccentricity(0)));
}
