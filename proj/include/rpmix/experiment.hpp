#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rpmix/classifier.hpp"
#include "rpmix/em.hpp"
#include "rpmix/gaussian.hpp"
#include "rpmix/synthesis.hpp"

namespace rpmix {

enum class ExperimentKind {
  Fig3SepVsN,
  Fig4SepVsK,
  Fig5EccTable,
  Fig6EccVsD,
  Fig7PcaVsRp,
  Fig8EmCompare,
  SecondEmCompare,
  Fig9DigitSweep,
  PcaCollapse,
};

std::string_view to_string(ExperimentKind kind);
/// Accepts the enum name or the short CLI name (fig3, fig4, ..., second_em, pca_collapse).
ExperimentKind experiment_from_string(std::string_view name);
std::string_view short_name(ExperimentKind kind);
std::vector<ExperimentKind> all_experiments();

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Fig3SepVsN;
  int trials = 40;
  std::uint64_t base_seed = 1;
  int threads = 1;
  std::map<std::string, std::string> overrides;
};

/// Paper defaults for the experiment (trial count and every override key).
ExperimentConfig default_config(ExperimentKind kind);
/// Override keys the experiment understands, with their default values.
const std::map<std::string, std::string>& experiment_schema(ExperimentKind kind);

/// key = value lines; '#' starts a comment. Recognized top-level keys are
/// experiment, trials, base_seed (alias seed) and threads; everything else is
/// an override. Missing keys take the experiment's defaults.
/// `kind` names the experiment when the file does not; a conflicting name is a ConfigError.
ExperimentConfig parse_config(std::istream& in, std::optional<ExperimentKind> kind = std::nullopt);
ExperimentConfig read_config(const std::filesystem::path& path,
                             std::optional<ExperimentKind> kind = std::nullopt);
/// Throws ConfigError on unknown keys or malformed values.
void validate(const ExperimentConfig& config);

struct TrialRow {
  int trial = 0;
  std::uint64_t seed = 0;
  std::vector<double> params;
  std::vector<double> metrics;
};

struct AggregateRow {
  std::vector<double> params;
  std::string metric;
  // Non-finite metric values (failed runs) are excluded from every statistic.
  int count = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

struct ExperimentReport {
  std::string name;
  std::vector<std::string> param_names;
  std::vector<std::string> metric_names;
  std::vector<TrialRow> rows;
  std::vector<AggregateRow> aggregates;
  // Extra CSV documents written next to the report: (file suffix, content).
  std::vector<std::pair<std::string, std::string>> attachments;
};

/// Groups rows by parameter tuple in order of first appearance.
std::vector<AggregateRow> aggregate(const ExperimentReport& report);

void write_trials_csv(std::ostream& out, const ExperimentReport& report);
void write_summary_csv(std::ostream& out, const ExperimentReport& report);
/// Reads a trials CSV back; the first `param_count` columns after trial,seed are parameters.
ExperimentReport read_trials_csv(std::istream& in, std::size_t param_count);
/// Writes <name>_trials.csv, <name>_summary.csv and attachments into `dir`.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);
void print_summary(std::ostream& out, const ExperimentReport& report);

ExperimentReport run(const ExperimentConfig& config);

// Experiment bodies, one trial each.

double fig3_trial(Index n, Index d, std::uint64_t seed, double c = 1.0);
double fig4_trial(Index k, Index n, Index d, double c, std::uint64_t seed);
Index fig4_dimension(Index k);
double fig5_trial(double eccentricity, Index n, Index d, std::uint64_t seed);
/// Eccentricity of `cov` after a random orthonormal projection to d dims.
double projected_eccentricity(const Matrix& cov, Index d, std::uint64_t seed);

struct SeparationTables {
  Matrix pca;
  Matrix rp;
};
SeparationTables fig7_trial(const MixtureSpec& spec, Index d, Index samples, std::uint64_t seed);

struct EmCompareSetup {
  MixtureSpec spec;
  CovarianceRestriction restriction = CovarianceRestriction::SharedFull;
  Index d = 25;
  Index train_size = 1000;
  Index test_size = 1000;
  EmOptions em;
};

enum class Outcome { Beat, Match, Lose };

struct EmComparison {
  bool regular_failed = false;
  bool rp_failed = false;
  bool regular_success = false;
  bool rp_success = false;
  int regular_iterations = 0;
  int rp_low_iterations = 0;
  double regular_test_loglik = 0.0;  // -inf when the run failed
  double rp_test_loglik = 0.0;
  Outcome outcome = Outcome::Lose;
};

/// Beat when the RP log-likelihood is strictly larger and not a match; match
/// when both are finite and equal within 1e-9 relative. A failed run scores -inf.
Outcome compare_loglik(double rp, double regular);

EmComparison em_compare_trial(const EmCompareSetup& setup, std::uint64_t seed);

struct CollapseResult {
  double original = 0.0;
  double pca_below = 0.0;  // PCA to k/2 - 1 dims
  double pca_full = 0.0;   // PCA to k/2 dims
  double rp = 0.0;
  Index rp_dim = 0;
};
/// Unit spherical Gaussians at +-j e_j, j = 1..k/2, in R^{k/2}.
Mixture collapse_mixture(Index k);
CollapseResult pca_collapse_trial(Index k, Index samples, std::uint64_t seed);

struct DigitData {
  LabeledDataset train;
  LabeledDataset test;
};
/// Synthetic stand-in for the digit data: 10 rotated-eccentric classes in
/// R^256 (E = 1e4, c = 0.63) with balanced class counts.
DigitData digit_surrogate(std::uint64_t seed, Index train_per_class = 729, Index test_per_class = 200);
double digit_trial(const DigitData& data, Index d, std::uint64_t seed, const TrainOptions& options = {});

}  // namespace rpmix
