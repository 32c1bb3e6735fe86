#include "rpmix/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "rpmix/error.hpp"

namespace rpmix {

using nlohmann::json;

std::string format_double(double value) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", value);
  return std::string(buf, static_cast<std::size_t>(len));
}

void write_dataset_csv(std::ostream& out, const Dataset& data, const std::vector<std::string>& header) {
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Index r = 0; r < data.rows(); ++r) {
    for (Index j = 0; j < data.cols(); ++j) out << (j ? "," : "") << format_double(data(r, j));
    out << '\n';
  }
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data,
                       const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  write_dataset_csv(out, data, header);
}

namespace {

std::vector<double> parse_row(const std::string& line, std::size_t line_no) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t end = line.find(',', start);
    if (end == std::string::npos) end = line.size();
    std::string field = line.substr(start, end - start);
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
      throw Error(ErrorKind::ParseError,
                  "line " + std::to_string(line_no) + ": cannot parse '" + field + "' as a number");
    }
    values.push_back(v);
    start = end + 1;
  }
  return values;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in, bool has_header) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (has_header && line_no == 1) continue;
    if (line.empty() || line == "\r") continue;
    auto row = parse_row(line, line_no);
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorKind::InconsistentWidth,
                  "line " + std::to_string(line_no) + ": expected " +
                      std::to_string(rows.front().size()) + " values, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::ParseError, "no data rows");
  Dataset data(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < rows[r].size(); ++j) data(static_cast<Index>(r), static_cast<Index>(j)) = rows[r][j];
  }
  return data;
}

Dataset read_dataset_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  return read_dataset_csv(in, has_header);
}

namespace {

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix rows_matrix(const json& rows) {
  if (!rows.is_array() || rows.empty() || !rows.front().is_array()) {
    throw Error(ErrorKind::ParseError, "expected a non-empty array of rows");
  }
  const auto cols = rows.front().size();
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].is_array() || rows[i].size() != cols) {
      throw Error(ErrorKind::InconsistentWidth, "ragged matrix row " + std::to_string(i));
    }
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j].get<double>();
  }
  return m;
}

Vector to_vector(const json& arr) {
  if (!arr.is_array()) throw Error(ErrorKind::ParseError, "expected an array");
  Vector v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Index>(i)) = arr[i].get<double>();
  return v;
}

const json& field(const json& doc, const char* name) {
  if (!doc.is_object() || !doc.contains(name)) {
    throw Error(ErrorKind::ParseError, std::string("document is missing field '") + name + "'");
  }
  return doc.at(name);
}

}  // namespace

json mixture_to_json(const Mixture& m) {
  json doc;
  doc["dim"] = m.dim();
  doc["weights"] = json::array();
  doc["means"] = json::array();
  doc["covariances"] = json::array();
  for (Index i = 0; i < m.size(); ++i) {
    doc["weights"].push_back(m.weight(i));
    doc["means"].push_back(std::vector<double>(m.component(i).mean().begin(), m.component(i).mean().end()));
    doc["covariances"].push_back(matrix_rows(m.component(i).covariance()));
  }
  return doc;
}

Mixture mixture_from_json(const json& doc) {
  try {
    const json& weights = field(doc, "weights");
    const json& means = field(doc, "means");
    const json& covs = field(doc, "covariances");
    if (means.size() != weights.size() || covs.size() != weights.size()) {
      throw Error(ErrorKind::ShapeMismatch, "weights, means and covariances differ in length");
    }
    // Identical covariance matrices become one shared instance again.
    std::vector<std::pair<Matrix, std::shared_ptr<const Covariance>>> seen;
    std::vector<Gaussian> components;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      Matrix cov = rows_matrix(covs[i]);
      std::shared_ptr<const Covariance> shared;
      for (const auto& [matrix, ptr] : seen) {
        if (matrix.rows() == cov.rows() && matrix == cov) shared = ptr;
      }
      if (!shared) {
        shared = std::make_shared<const Covariance>(cov);
        seen.emplace_back(std::move(cov), shared);
      }
      components.emplace_back(to_vector(means[i]), shared);
    }
    return Mixture(std::move(components), to_vector(weights));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
}

json projection_to_json(const ProjectionMatrix& p) {
  json doc;
  doc["kind"] = std::string(to_string(p.kind()));
  doc["source_dim"] = p.source_dim();
  doc["target_dim"] = p.target_dim();
  doc["entries"] = matrix_rows(p.rows());
  return doc;
}

ProjectionMatrix projection_from_json(const json& doc) {
  try {
    Matrix rows = rows_matrix(field(doc, "entries"));
    if (field(doc, "source_dim").get<Index>() != rows.cols() ||
        field(doc, "target_dim").get<Index>() != rows.rows()) {
      throw Error(ErrorKind::ShapeMismatch, "projection dims disagree with its entries");
    }
    return ProjectionMatrix(std::move(rows),
                            projection_kind_from_string(field(doc, "kind").get<std::string>()));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
}

json fit_to_json(const FitResult& fit) {
  json doc = mixture_to_json(fit.model);
  doc["iterations"] = fit.iterations;
  doc["converged"] = fit.converged;
  doc["rescues"] = fit.rescues;
  doc["loglik_trace"] = fit.loglik_trace;
  return doc;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace rpmix
