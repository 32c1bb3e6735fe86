#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "rpmix/em.hpp"
#include "rpmix/gaussian.hpp"
#include "rpmix/projection.hpp"

namespace rpmix {

/// Shortest text that parses back to the same double ("%.17g").
std::string format_double(double value);

// Dataset CSV: one point per row, no header unless one is passed.
void write_dataset_csv(std::ostream& out, const Dataset& data,
                       const std::vector<std::string>& header = {});
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data,
                       const std::vector<std::string>& header = {});
Dataset read_dataset_csv(std::istream& in, bool has_header = false);
Dataset read_dataset_csv(const std::filesystem::path& path, bool has_header = false);

// Documents: {"weights", "means", "covariances"} for mixtures,
// {"kind", "source_dim", "target_dim", "entries"} for projections.
// Matrices are arrays of rows.
nlohmann::json mixture_to_json(const Mixture& m);
Mixture mixture_from_json(const nlohmann::json& doc);
nlohmann::json projection_to_json(const ProjectionMatrix& p);
ProjectionMatrix projection_from_json(const nlohmann::json& doc);

/// Mixture document plus iteration count, convergence flag and loglik trace.
nlohmann::json fit_to_json(const FitResult& fit);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace rpmix
