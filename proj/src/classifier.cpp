#include "rpmix/classifier.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "rpmix/error.hpp"
#include "rpmix/io.hpp"
#include "rpmix/random.hpp"

namespace rpmix {

namespace {

constexpr std::uint64_t kProjectionStream = 0;
constexpr std::uint64_t kClassStreamBase = 1;

std::vector<int> present_classes(const LabeledDataset& data) {
  std::vector<int> out;
  const auto counts = data.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0) out.push_back(static_cast<int>(c));
  }
  return out;
}

}  // namespace

Dataset LabeledDataset::class_points(int c) const {
  Index count = 0;
  for (int label : labels) count += (label == c);
  Dataset out(count, dim());
  Index r = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == c) out.row(r++) = points.row(static_cast<Index>(i));
  }
  return out;
}

std::vector<Index> LabeledDataset::class_counts() const {
  std::vector<Index> counts(static_cast<std::size_t>(num_classes), 0);
  for (int label : labels) ++counts[static_cast<std::size_t>(label)];
  return counts;
}

LabeledDataset make_labeled(Dataset points, std::vector<int> labels, int num_classes) {
  if (static_cast<Index>(labels.size()) != points.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "one label per point required");
  }
  if (labels.empty()) throw Error(ErrorKind::NotEnoughData, "labeled dataset is empty");
  if (!points.allFinite()) throw Error(ErrorKind::BadSpec, "labeled points must be finite");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  const int min_label = *std::min_element(labels.begin(), labels.end());
  if (min_label < 0) throw Error(ErrorKind::BadSpec, "labels must be non-negative");
  if (num_classes == 0) num_classes = max_label + 1;
  if (max_label >= num_classes) throw Error(ErrorKind::BadSpec, "label exceeds declared class count");
  return LabeledDataset{std::move(points), std::move(labels), num_classes};
}

LabeledDataset ingest(std::istream& in) {
  std::vector<int> labels;
  std::vector<double> values;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() < 2) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": need a label and features");
    }
    if (width == 0) width = fields.size() - 1;
    if (fields.size() - 1 != width) {
      throw Error(ErrorKind::InconsistentWidth, "line " + std::to_string(line_no) + ": expected " +
                                                    std::to_string(width) + " features, got " +
                                                    std::to_string(fields.size() - 1));
    }
    int label = 0;
    const auto& lf = fields[0];
    if (auto [p, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        ec != std::errc() || p != lf.data() + lf.size() || label < 0) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad label '" + lf + "'");
    }
    labels.push_back(label);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      const auto& f = fields[j];
      if (auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
          f.empty() || ec != std::errc() || p != f.data() + f.size()) {
        throw Error(ErrorKind::ParseError,
                    "line " + std::to_string(line_no) + ": cannot parse '" + f + "' as a number");
      }
      values.push_back(v);
    }
  }
  if (labels.empty()) throw Error(ErrorKind::ParseError, "line 0: file has no data rows");
  Dataset points(static_cast<Index>(labels.size()), static_cast<Index>(width));
  for (Index r = 0; r < points.rows(); ++r) {
    for (Index j = 0; j < points.cols(); ++j) {
      points(r, j) = values[static_cast<std::size_t>(r * points.cols() + j)];
    }
  }
  return make_labeled(std::move(points), std::move(labels));
}

LabeledDataset ingest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::MissingData,
                "cannot open " + path.string() + " (expected CSV lines 'label,x1,...,xn')");
  }
  return ingest(in);
}

void write_labeled_csv(std::ostream& out, const LabeledDataset& data) {
  for (Index r = 0; r < data.size(); ++r) {
    out << data.labels[static_cast<std::size_t>(r)];
    for (Index j = 0; j < data.dim(); ++j) out << ',' << format_double(data.points(r, j));
    out << '\n';
  }
}

void write_labeled_csv(const std::filesystem::path& path, const LabeledDataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  write_labeled_csv(out, data);
}

ClassMixtureModel train(const LabeledDataset& data, Index d, std::uint64_t seed,
                        const TrainOptions& options) {
  if (d > data.dim()) throw Error(ErrorKind::BadDims, "projected dimension exceeds data dimension");
  ProjectionMatrix projection = random_orthonormal(data.dim(), d, derive_seed(seed, kProjectionStream));
  const LabeledDataset projected{project_data(projection, data.points), data.labels, data.num_classes};

  const auto counts = data.class_counts();
  ClassMixtureModel model{std::move(projection), {}, Vector::Zero(data.num_classes), options.use_priors, {}};
  for (int c : present_classes(data)) {
    if (counts[static_cast<std::size_t>(c)] < options.per_class_k) {
      std::ostringstream msg;
      msg << "class " << c << " has " << counts[static_cast<std::size_t>(c)] << " points, needs "
          << options.per_class_k;
      throw Error(ErrorKind::ClassTooSmall, msg.str());
    }
    FitResult fit = run_em(projected.class_points(c), options.per_class_k, CovarianceRestriction::SharedFull,
                           derive_seed(seed, kClassStreamBase + static_cast<std::uint64_t>(c)), options.em);
    model.em_iterations.push_back(fit.iterations);
    model.per_class.push_back(std::move(fit.model));
    model.class_priors(c) = static_cast<double>(counts[static_cast<std::size_t>(c)]) /
                            static_cast<double>(data.size());
  }
  return model;
}

std::vector<int> predict_all(const ClassMixtureModel& model, const Dataset& points) {
  const Dataset projected = project_data(model.projection, points);
  std::vector<int> present;
  for (Index c = 0; c < model.class_priors.size(); ++c) {
    if (model.class_priors(c) > 0.0) present.push_back(static_cast<int>(c));
  }
  Vector best = Vector::Constant(points.rows(), -std::numeric_limits<double>::infinity());
  std::vector<int> out(static_cast<std::size_t>(points.rows()), present.empty() ? 0 : present.front());
  for (std::size_t idx = 0; idx < present.size(); ++idx) {
    const int c = present[idx];
    const Mixture& mix = model.per_class[idx];
    const double prior = model.use_priors ? std::log(model.class_priors(c)) : 0.0;
    for (Index i = 0; i < mix.size(); ++i) {
      const Vector score = (log_density_rows(mix.component(i), projected).array() +
                            std::log(mix.weight(i)) + prior).matrix();
      for (Index r = 0; r < score.size(); ++r) {
        // Strict comparison: earlier (lower) classes win ties.
        if (score(r) > best(r)) {
          best(r) = score(r);
          out[static_cast<std::size_t>(r)] = c;
        }
      }
    }
  }
  return out;
}

int predict(const ClassMixtureModel& model, const Vector& x) {
  require_same_dim(model.projection.source_dim(), x.size(), "predict");
  return predict_all(model, x.transpose()).front();
}

double evaluate(const ClassMixtureModel& model, const LabeledDataset& test) {
  require_same_dim(model.projection.source_dim(), test.dim(), "evaluate");
  const auto predicted = predict_all(model, test.points);
  Index correct = 0;
  for (std::size_t r = 0; r < predicted.size(); ++r) correct += (predicted[r] == test.labels[r]);
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

ClusterAnalysis cluster_analysis(const LabeledDataset& data,
                                 const std::optional<ProjectionMatrix>& projection) {
  const Dataset points = projection ? project_data(*projection, data.points) : data.points;
  const LabeledDataset view{points, data.labels, data.num_classes};
  const auto classes = present_classes(view);
  const auto k = static_cast<Index>(classes.size());
  const Index dim = points.cols();

  std::vector<Vector> means;
  std::vector<double> traces;
  ClusterAnalysis out;
  out.classes = classes;
  out.eccentricity.resize(k);
  for (Index i = 0; i < k; ++i) {
    const Dataset pts = view.class_points(classes[static_cast<std::size_t>(i)]);
    const Vector mean = pts.colwise().mean().transpose();
    const Dataset centered = pts.rowwise() - mean.transpose();
    Matrix cov = centered.transpose() * centered / static_cast<double>(pts.rows());
    cov = 0.5 * (cov + cov.transpose());
    means.push_back(mean);
    traces.push_back(cov.trace());

    const Vector eig = symmetric_eigenvalues(cov);
    const double top = eig(eig.size() - 1);
    double smallest_positive = std::numeric_limits<double>::quiet_NaN();
    for (Index j = 0; j < eig.size(); ++j) {
      if (eig(j) > 0.0) {
        smallest_positive = eig(j);
        break;
      }
    }
    const double numerical_floor = top * static_cast<double>(dim) * std::numeric_limits<double>::epsilon();
    out.rank_deficient.push_back(pts.rows() <= dim || eig(0) <= numerical_floor);
    out.eccentricity(i) = std::sqrt(top / smallest_positive);
  }

  out.separation = Matrix::Zero(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) {
      const auto a = static_cast<std::size_t>(i);
      const auto b = static_cast<std::size_t>(j);
      const double s = (means[a] - means[b]).norm() / std::sqrt(std::max(traces[a], traces[b]));
      out.separation(i, j) = s;
      out.separation(j, i) = s;
    }
  }
  return out;
}

void write_cluster_table(std::ostream& out, const ClusterAnalysis& analysis) {
  const Index k = analysis.separation.rows();
  out << "class";
  for (int c : analysis.classes) out << ',' << c;
  out << ",eccentricity,rank_deficient\n";
  for (Index i = 0; i < k; ++i) {
    out << analysis.classes[static_cast<std::size_t>(i)];
    for (Index j = 0; j < k; ++j) out << ',' << format_double(analysis.separation(i, j));
    out << ',' << format_double(analysis.eccentricity(i)) << ','
        << (analysis.rank_deficient[static_cast<std::size_t>(i)] ? 1 : 0) << '\n';
  }
}

}  // namespace rpmix
