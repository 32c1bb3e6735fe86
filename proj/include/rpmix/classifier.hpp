#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "rpmix/em.hpp"
#include "rpmix/gaussian.hpp"
#include "rpmix/projection.hpp"

namespace rpmix {

struct LabeledDataset {
  Dataset points;
  std::vector<int> labels;
  int num_classes = 0;  // labels lie in [0, num_classes)

  Index size() const noexcept { return points.rows(); }
  Index dim() const noexcept { return points.cols(); }
  /// Rows carrying label `c`, in file order.
  Dataset class_points(int c) const;
  std::vector<Index> class_counts() const;
};

/// Builds a dataset and checks labels and finiteness; num_classes defaults to
/// max label + 1.
LabeledDataset make_labeled(Dataset points, std::vector<int> labels, int num_classes = 0);

/// Label-first CSV: "label,x1,...,xn" per line; width fixed by the first line.
LabeledDataset ingest(std::istream& in);
LabeledDataset ingest(const std::filesystem::path& path);
void write_labeled_csv(std::ostream& out, const LabeledDataset& data);
void write_labeled_csv(const std::filesystem::path& path, const LabeledDataset& data);

struct ClassMixtureModel {
  ProjectionMatrix projection;
  std::vector<Mixture> per_class;
  Vector class_priors;
  // Score = log prior + log weight + log density when true; the prior term is
  // dropped otherwise.
  bool use_priors = true;
  std::vector<int> em_iterations;
};

struct TrainOptions {
  Index per_class_k = 5;
  bool use_priors = true;
  EmOptions em{};
};

/// Fix one random orthonormal projection, then fit a SharedFull mixture to
/// each class independently in the projected space.
ClassMixtureModel train(const LabeledDataset& data, Index d, std::uint64_t seed,
                        const TrainOptions& options = {});

/// Class owning the best-scoring Gaussian; ties go to the lower class index.
int predict(const ClassMixtureModel& model, const Vector& x);
std::vector<int> predict_all(const ClassMixtureModel& model, const Dataset& points);
double evaluate(const ClassMixtureModel& model, const LabeledDataset& test);

struct ClusterAnalysis {
  std::vector<int> classes;  // labels present in the data, ascending
  Matrix separation;         // class x class, zero diagonal
  Vector eccentricity;
  // True where the class covariance is singular or the class has no more
  // points than dimensions; eccentricity then uses the smallest positive eigenvalue.
  std::vector<bool> rank_deficient;
};

/// One Gaussian per class (sample mean, ML covariance), on raw data or on its
/// projection when one is supplied.
ClusterAnalysis cluster_analysis(const LabeledDataset& data,
                                 const std::optional<ProjectionMatrix>& projection = std::nullopt);

/// Class x class separations followed by an eccentricity column.
void write_cluster_table(std::ostream& out, const ClusterAnalysis& analysis);

}  // namespace rpmix
