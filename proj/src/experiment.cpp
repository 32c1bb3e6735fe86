#include "rpmix/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "rpmix/error.hpp"
#include "rpmix/io.hpp"
#include "rpmix/projection.hpp"
#include "rpmix/random.hpp"

namespace rpmix {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMatchTolerance = 1e-9;

enum class FieldType { Int, IntList, Real, RealList, Restriction, Mode, Text, DimOrAuto };

struct Field {
  std::string default_value;
  FieldType type;
};

using Schema = std::map<std::string, Field>;

const Schema& schema_for(ExperimentKind kind) {
  static const std::map<ExperimentKind, Schema> schemas = {
      {ExperimentKind::Fig3SepVsN,
       {{"n", {"50,100,200,500,1000", FieldType::IntList}},
        {"d", {"20", FieldType::Int}},
        {"c", {"1", FieldType::Real}}}},
      {ExperimentKind::Fig4SepVsK,
       {{"n", {"100", FieldType::Int}},
        {"k", {"2,3,5,10,20", FieldType::IntList}},
        {"c", {"1", FieldType::Real}},
        {"d", {"auto", FieldType::DimOrAuto}}}},
      {ExperimentKind::Fig5EccTable,
       {{"E", {"50,100,150,200", FieldType::RealList}},
        {"n", {"25,50,75,100,200", FieldType::IntList}},
        {"d", {"20", FieldType::Int}}}},
      {ExperimentKind::Fig6EccVsD,
       {{"n", {"50", FieldType::Int}},
        {"E", {"1000", FieldType::Real}},
        {"d_max", {"49", FieldType::Int}},
        {"d_min", {"25", FieldType::Int}},
        {"gaussian_seed", {"1000", FieldType::Int}}}},
      {ExperimentKind::Fig7PcaVsRp,
       {{"n", {"100", FieldType::Int}},
        {"k", {"5", FieldType::Int}},
        {"c", {"0.5", FieldType::Real}},
        {"E", {"1000", FieldType::Real}},
        {"d", {"10", FieldType::Int}},
        {"samples", {"1000", FieldType::Int}},
        {"mode", {"DiagonalDistinct", FieldType::Mode}}}},
      {ExperimentKind::Fig8EmCompare,
       {{"n", {"50,100,150,200", FieldType::IntList}},
        {"k", {"5", FieldType::Int}},
        {"c", {"1", FieldType::Real}},
        {"E", {"1", FieldType::Real}},
        {"d", {"25", FieldType::Int}},
        {"train_size", {"1000", FieldType::Int}},
        {"test_size", {"1000", FieldType::Int}},
        {"restriction", {"SharedFull", FieldType::Restriction}},
        {"mode", {"SphericalShared", FieldType::Mode}}}},
      {ExperimentKind::SecondEmCompare,
       {{"n", {"100", FieldType::IntList}},
        {"k", {"3", FieldType::Int}},
        {"c", {"0.8", FieldType::Real}},
        {"E", {"25", FieldType::Real}},
        {"d", {"25", FieldType::Int}},
        {"train_size", {"1000", FieldType::Int}},
        {"test_size", {"1000", FieldType::Int}},
        {"restriction", {"FullDistinct", FieldType::Restriction}},
        {"mode", {"RotatedDistinct", FieldType::Mode}}}},
      {ExperimentKind::Fig9DigitSweep,
       {{"d", {"20,30,40,50,60,80,100", FieldType::IntList}},
        {"k", {"5", FieldType::Int}},
        {"data", {"", FieldType::Text}},
        {"train_path", {"", FieldType::Text}},
        {"test_path", {"", FieldType::Text}},
        {"data_seed", {"1", FieldType::Int}}}},
      {ExperimentKind::PcaCollapse,
       {{"k", {"10", FieldType::Int}},
        {"samples", {"20000", FieldType::Int}}}},
  };
  return schemas.at(kind);
}

int default_trials(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Fig8EmCompare: return 150;
    case ExperimentKind::SecondEmCompare: return 100;
    case ExperimentKind::Fig9DigitSweep: return 5;
    case ExperimentKind::PcaCollapse: return 10;
    default: return 40;
  }
}

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorKind::ConfigError, "key '" + key + "': cannot read '" + value + "' as " + want);
}

long long parse_int(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || p != value.data() + value.size()) bad_value(key, value, "an integer");
  return v;
}

double parse_real(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || p != value.data() + value.size() || !std::isfinite(v)) {
    bad_value(key, value, "a finite number");
  }
  return v;
}

// Typed view over a validated config.
class Values {
 public:
  explicit Values(const ExperimentConfig& config) : config_(config), schema_(schema_for(config.experiment)) {}

  const std::string& raw(const std::string& key) const {
    const auto it = config_.overrides.find(key);
    return it != config_.overrides.end() ? it->second : schema_.at(key).default_value;
  }

  Index dim(const std::string& key) const {
    const long long v = parse_int(key, raw(key));
    if (v < 1) bad_value(key, raw(key), "a positive integer");
    return static_cast<Index>(v);
  }

  std::vector<Index> dims(const std::string& key) const {
    std::vector<Index> out;
    for (const auto& item : split_list(raw(key))) {
      const long long v = parse_int(key, item);
      if (v < 1) bad_value(key, item, "a positive integer");
      out.push_back(static_cast<Index>(v));
    }
    if (out.empty()) bad_value(key, raw(key), "a non-empty list");
    return out;
  }

  double real(const std::string& key) const { return parse_real(key, raw(key)); }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(raw(key))) out.push_back(parse_real(key, item));
    if (out.empty()) bad_value(key, raw(key), "a non-empty list");
    return out;
  }

  CovarianceRestriction restriction(const std::string& key) const {
    try {
      return restriction_from_string(raw(key));
    } catch (const Error&) {
      bad_value(key, raw(key), "FullDistinct or SharedFull");
    }
  }

  CovarianceMode mode(const std::string& key) const {
    try {
      return covariance_mode_from_string(raw(key));
    } catch (const Error&) {
      bad_value(key, raw(key), "a covariance mode");
    }
  }

  std::optional<Index> dim_or_auto(const std::string& key) const {
    if (raw(key) == "auto") return std::nullopt;
    return dim(key);
  }

 private:
  const ExperimentConfig& config_;
  const Schema& schema_;
};

void check_field(const std::string& key, const std::string& value, FieldType type) {
  switch (type) {
    case FieldType::Int: parse_int(key, value); break;
    case FieldType::IntList:
      if (split_list(value).empty()) bad_value(key, value, "a non-empty list");
      for (const auto& item : split_list(value)) parse_int(key, item);
      break;
    case FieldType::Real: parse_real(key, value); break;
    case FieldType::RealList:
      if (split_list(value).empty()) bad_value(key, value, "a non-empty list");
      for (const auto& item : split_list(value)) parse_real(key, item);
      break;
    case FieldType::Restriction:
      if (value != "FullDistinct" && value != "SharedFull") bad_value(key, value, "FullDistinct or SharedFull");
      break;
    case FieldType::Mode:
      try {
        covariance_mode_from_string(value);
      } catch (const Error&) {
        bad_value(key, value, "a covariance mode");
      }
      break;
    case FieldType::DimOrAuto:
      if (value != "auto") parse_int(key, value);
      break;
    case FieldType::Text: break;
  }
}

// One unit of work: a parameter tuple and a trial index.
struct Job {
  std::vector<double> params;
  int trial = 0;
  std::uint64_t seed = 0;
  std::function<std::vector<double>()> body;
};

struct Plan {
  std::vector<std::string> param_names;
  std::vector<std::string> metric_names;
  std::vector<Job> jobs;
};

std::vector<std::vector<double>> run_jobs(const std::vector<Job>& jobs, int threads) {
  std::vector<std::vector<double>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = jobs[i].body();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::max(1, threads));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(count, jobs.size()); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i]) continue;
    const std::string where = "trial " + std::to_string(jobs[i].trial) + " (seed " +
                              std::to_string(jobs[i].seed) + "): ";
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), where + e.detail());
    }
  }
  return results;
}

std::vector<double> comparison_metrics(const EmComparison& r) {
  auto iters = [](bool failed, int it) { return failed ? kNaN : static_cast<double>(it); };
  return {static_cast<double>(r.regular_success),
          static_cast<double>(r.rp_success),
          static_cast<double>(r.regular_failed),
          static_cast<double>(r.rp_failed),
          iters(r.regular_failed, r.regular_iterations),
          iters(r.rp_failed, r.rp_low_iterations),
          r.regular_test_loglik,
          r.rp_test_loglik,
          static_cast<double>(r.outcome == Outcome::Beat),
          static_cast<double>(r.outcome == Outcome::Match),
          static_cast<double>(r.outcome == Outcome::Lose)};
}

double offdiag(const Matrix& table, bool take_max) {
  double out = take_max ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  for (Index i = 0; i < table.rows(); ++i) {
    for (Index j = 0; j < table.cols(); ++j) {
      if (i != j) out = take_max ? std::max(out, table(i, j)) : std::min(out, table(i, j));
    }
  }
  return out;
}

Matrix separation_table(const Mixture& m) {
  Matrix table = Matrix::Zero(m.size(), m.size());
  for (Index i = 0; i < m.size(); ++i) {
    for (Index j = i + 1; j < m.size(); ++j) {
      table(i, j) = table(j, i) = pairwise_separation(m.component(i), m.component(j));
    }
  }
  return table;
}

Plan make_plan(const ExperimentConfig& config, std::vector<std::pair<std::string, std::string>>& attachments,
               std::shared_ptr<std::vector<std::string>> table_rows) {
  const Values v(config);
  Plan plan;
  auto seed_of = [&](int t) { return config.base_seed + static_cast<std::uint64_t>(t); };
  auto add = [&](std::vector<double> params, int t, std::function<std::vector<double>(std::uint64_t)> body) {
    const std::uint64_t seed = seed_of(t);
    plan.jobs.push_back(Job{std::move(params), t, seed, [body = std::move(body), seed] { return body(seed); }});
  };

  switch (config.experiment) {
    case ExperimentKind::Fig3SepVsN: {
      plan.param_names = {"n", "d"};
      plan.metric_names = {"separation"};
      const Index d = v.dim("d");
      const double c = v.real("c");
      for (Index n : v.dims("n")) {
        for (int t = 0; t < config.trials; ++t) {
          add({double(n), double(d)}, t,
              [n, d, c](std::uint64_t s) { return std::vector<double>{fig3_trial(n, d, s, c)}; });
        }
      }
      break;
    }
    case ExperimentKind::Fig4SepVsK: {
      plan.param_names = {"k", "n", "d"};
      plan.metric_names = {"separation"};
      const Index n = v.dim("n");
      const double c = v.real("c");
      const auto fixed_d = v.dim_or_auto("d");
      for (Index k : v.dims("k")) {
        const Index d = fixed_d ? *fixed_d : fig4_dimension(k);
        for (int t = 0; t < config.trials; ++t) {
          add({double(k), double(n), double(d)}, t,
              [=](std::uint64_t s) { return std::vector<double>{fig4_trial(k, n, d, c, s)}; });
        }
      }
      break;
    }
    case ExperimentKind::Fig5EccTable: {
      plan.param_names = {"E", "n", "d"};
      plan.metric_names = {"eccentricity"};
      const Index d = v.dim("d");
      for (double e : v.reals("E")) {
        for (Index n : v.dims("n")) {
          for (int t = 0; t < config.trials; ++t) {
            add({e, double(n), double(d)}, t,
                [=](std::uint64_t s) { return std::vector<double>{fig5_trial(e, n, d, s)}; });
          }
        }
      }
      break;
    }
    case ExperimentKind::Fig6EccVsD: {
      plan.param_names = {"d"};
      plan.metric_names = {"eccentricity"};
      const Index n = v.dim("n");
      const auto gaussian_seed = static_cast<std::uint64_t>(parse_int("gaussian_seed", v.raw("gaussian_seed")));
      const Index d_max = v.dim("d_max");
      const Index d_min = v.dim("d_min");
      if (d_min > d_max || d_max > n) {
        throw Error(ErrorKind::ConfigError, "need d_min <= d_max <= n");
      }
      auto cov = std::make_shared<const Matrix>(
          eccentric_covariance(n, v.real("E"), CovarianceMode::DiagonalDistinct, gaussian_seed));
      for (Index d = d_max; d >= d_min; --d) {
        for (int t = 0; t < config.trials; ++t) {
          add({double(d)}, t, [cov, d](std::uint64_t s) {
            return std::vector<double>{projected_eccentricity(*cov, d, derive_seed(s, static_cast<std::uint64_t>(d)))};
          });
        }
      }
      break;
    }
    case ExperimentKind::Fig7PcaVsRp: {
      plan.metric_names = {"pca_min", "pca_max", "rp_min", "rp_max"};
      const MixtureSpec base{v.dim("n"), v.dim("k"), v.real("c"), v.real("E"), v.mode("mode"), 0};
      const Index d = v.dim("d");
      const Index samples = v.dim("samples");
      table_rows->assign(static_cast<std::size_t>(config.trials), {});
      for (int t = 0; t < config.trials; ++t) {
        add({}, t, [=](std::uint64_t s) {
          const SeparationTables tables = fig7_trial(base, d, samples, s);
          std::ostringstream rows;
          for (const auto* which : {"PCA", "RP"}) {
            const Matrix& m = std::string(which) == "PCA" ? tables.pca : tables.rp;
            for (Index i = 0; i < m.rows(); ++i) {
              rows << t << ',' << s << ',' << which << ',' << i;
              for (Index j = 0; j < m.cols(); ++j) rows << ',' << format_double(m(i, j));
              rows << '\n';
            }
          }
          (*table_rows)[static_cast<std::size_t>(t)] = rows.str();
          return std::vector<double>{offdiag(tables.pca, false), offdiag(tables.pca, true),
                                     offdiag(tables.rp, false), offdiag(tables.rp, true)};
        });
      }
      std::ostringstream header;
      header << "trial,seed,method,row";
      for (Index j = 0; j < base.k; ++j) header << ',' << j;
      attachments.emplace_back("tables", header.str() + "\n");
      break;
    }
    case ExperimentKind::Fig8EmCompare:
    case ExperimentKind::SecondEmCompare: {
      plan.param_names = {"n"};
      plan.metric_names = {"regular_success", "rp_success", "regular_failed", "rp_failed",
                           "regular_iterations", "rp_low_iterations", "regular_test_loglik",
                           "rp_test_loglik", "beat", "match", "lose"};
      EmCompareSetup setup;
      setup.spec = MixtureSpec{0, v.dim("k"), v.real("c"), v.real("E"), v.mode("mode"), 0};
      setup.restriction = v.restriction("restriction");
      setup.d = v.dim("d");
      setup.train_size = v.dim("train_size");
      setup.test_size = v.dim("test_size");
      for (Index n : v.dims("n")) {
        for (int t = 0; t < config.trials; ++t) {
          add({double(n)}, t, [setup, n](std::uint64_t s) {
            EmCompareSetup local = setup;
            local.spec.n = n;
            return comparison_metrics(em_compare_trial(local, s));
          });
        }
      }
      break;
    }
    case ExperimentKind::Fig9DigitSweep: {
      plan.param_names = {"d"};
      plan.metric_names = {"accuracy"};
      const std::string source = v.raw("data");
      std::shared_ptr<const DigitData> data;
      if (source == "surrogate") {
        data = std::make_shared<const DigitData>(
            digit_surrogate(static_cast<std::uint64_t>(parse_int("data_seed", v.raw("data_seed")))));
      } else if (!source.empty()) {
        throw Error(ErrorKind::ConfigError, "key 'data': expected 'surrogate' or nothing, got '" + source + "'");
      } else {
        if (v.raw("train_path").empty() || v.raw("test_path").empty()) {
          throw Error(ErrorKind::MissingData,
                      "digit sweep needs train_path and test_path (CSV lines 'label,x1,...,xn') "
                      "or data=surrogate");
        }
        data = std::make_shared<const DigitData>(DigitData{ingest(v.raw("train_path")), ingest(v.raw("test_path"))});
      }
      TrainOptions options;
      options.per_class_k = v.dim("k");
      for (Index d : v.dims("d")) {
        for (int t = 0; t < config.trials; ++t) {
          add({double(d)}, t, [data, d, options](std::uint64_t s) {
            return std::vector<double>{digit_trial(*data, d, derive_seed(s, static_cast<std::uint64_t>(d)), options)};
          });
        }
      }
      break;
    }
    case ExperimentKind::PcaCollapse: {
      plan.param_names = {"k", "rp_dim"};
      plan.metric_names = {"original", "pca_below", "pca_full", "rp"};
      const Index k = v.dim("k");
      const Index samples = v.dim("samples");
      collapse_mixture(k);  // validates k before any trial runs
      const Index rp_dim = std::min(fig4_dimension(k), k / 2);
      for (int t = 0; t < config.trials; ++t) {
        add({double(k), double(rp_dim)}, t, [k, samples](std::uint64_t s) {
          const CollapseResult r = pca_collapse_trial(k, samples, s);
          return std::vector<double>{r.original, r.pca_below, r.pca_full, r.rp};
        });
      }
      break;
    }
  }
  return plan;
}

std::string join_params(const std::vector<double>& params) {
  std::string out;
  for (double p : params) out += format_double(p) + ",";
  return out;
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Fig3SepVsN: return "Fig3SepVsN";
    case ExperimentKind::Fig4SepVsK: return "Fig4SepVsK";
    case ExperimentKind::Fig5EccTable: return "Fig5EccTable";
    case ExperimentKind::Fig6EccVsD: return "Fig6EccVsD";
    case ExperimentKind::Fig7PcaVsRp: return "Fig7PcaVsRp";
    case ExperimentKind::Fig8EmCompare: return "Fig8EmCompare";
    case ExperimentKind::SecondEmCompare: return "SecondEmCompare";
    case ExperimentKind::Fig9DigitSweep: return "Fig9DigitSweep";
    case ExperimentKind::PcaCollapse: return "PcaCollapse";
  }
  return "Unknown";
}

std::string_view short_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Fig3SepVsN: return "fig3";
    case ExperimentKind::Fig4SepVsK: return "fig4";
    case ExperimentKind::Fig5EccTable: return "fig5";
    case ExperimentKind::Fig6EccVsD: return "fig6";
    case ExperimentKind::Fig7PcaVsRp: return "fig7";
    case ExperimentKind::Fig8EmCompare: return "fig8";
    case ExperimentKind::SecondEmCompare: return "second_em";
    case ExperimentKind::Fig9DigitSweep: return "fig9";
    case ExperimentKind::PcaCollapse: return "pca_collapse";
  }
  return "unknown";
}

std::vector<ExperimentKind> all_experiments() {
  return {ExperimentKind::Fig3SepVsN,    ExperimentKind::Fig4SepVsK,      ExperimentKind::Fig5EccTable,
          ExperimentKind::Fig6EccVsD,    ExperimentKind::Fig7PcaVsRp,     ExperimentKind::Fig8EmCompare,
          ExperimentKind::SecondEmCompare, ExperimentKind::Fig9DigitSweep, ExperimentKind::PcaCollapse};
}

ExperimentKind experiment_from_string(std::string_view name) {
  for (ExperimentKind kind : all_experiments()) {
    if (name == to_string(kind) || name == short_name(kind)) return kind;
  }
  throw Error(ErrorKind::ConfigError, "unknown experiment '" + std::string(name) + "'");
}

const std::map<std::string, std::string>& experiment_schema(ExperimentKind kind) {
  static const auto defaults = [] {
    std::map<ExperimentKind, std::map<std::string, std::string>> out;
    for (ExperimentKind k : all_experiments()) {
      for (const auto& [key, field] : schema_for(k)) out[k][key] = field.default_value;
    }
    return out;
  }();
  return defaults.at(kind);
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig config;
  config.experiment = kind;
  config.trials = default_trials(kind);
  return config;
}

ExperimentConfig parse_config(std::istream& in, std::optional<ExperimentKind> kind) {
  std::map<std::string, std::string> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key == "seed") key = "base_seed";
    if (key.empty() || !entries.emplace(key, trim(std::string_view(line).substr(eq + 1))).second) {
      throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": empty or repeated key '" + key + "'");
    }
  }

  if (const auto it = entries.find("experiment"); it != entries.end()) {
    const ExperimentKind named = experiment_from_string(it->second);
    if (kind && *kind != named) {
      throw Error(ErrorKind::ConfigError, "config names experiment '" + it->second + "' but '" +
                                              std::string(short_name(*kind)) + "' was requested");
    }
    kind = named;
    entries.erase(it);
  }
  if (!kind) throw Error(ErrorKind::ConfigError, "config does not name an experiment");

  ExperimentConfig config = default_config(*kind);
  for (auto& [key, value] : entries) {
    if (key == "trials") {
      config.trials = static_cast<int>(parse_int(key, value));
    } else if (key == "base_seed") {
      config.base_seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "threads") {
      config.threads = static_cast<int>(parse_int(key, value));
    } else {
      config.overrides[key] = value;
    }
  }
  validate(config);
  return config;
}

ExperimentConfig read_config(const std::filesystem::path& path, std::optional<ExperimentKind> kind) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config " + path.string());
  return parse_config(in, kind);
}

void validate(const ExperimentConfig& config) {
  if (config.trials < 1) throw Error(ErrorKind::ConfigError, "trials must be at least 1");
  if (config.threads < 1) throw Error(ErrorKind::ConfigError, "threads must be at least 1");
  const Schema& schema = schema_for(config.experiment);
  for (const auto& [key, value] : config.overrides) {
    const auto it = schema.find(key);
    if (it == schema.end()) {
      std::string known;
      for (const auto& [name, field] : schema) known += (known.empty() ? "" : ", ") + name;
      throw Error(ErrorKind::ConfigError, "experiment " + std::string(short_name(config.experiment)) +
                                              " has no key '" + key + "' (known: " + known + ")");
    }
    check_field(key, value, it->second.type);
  }
}

std::vector<AggregateRow> aggregate(const ExperimentReport& report) {
  std::vector<std::vector<double>> groups;
  std::map<std::string, std::size_t> group_index;
  std::vector<std::vector<const TrialRow*>> members;
  for (const auto& row : report.rows) {
    const auto [it, inserted] = group_index.emplace(join_params(row.params), groups.size());
    if (inserted) {
      groups.push_back(row.params);
      members.emplace_back();
    }
    members[it->second].push_back(&row);
  }

  std::vector<AggregateRow> out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t m = 0; m < report.metric_names.size(); ++m) {
      std::vector<double> values;
      for (const TrialRow* row : members[g]) {
        if (std::isfinite(row->metrics[m])) values.push_back(row->metrics[m]);
      }
      AggregateRow agg{groups[g], report.metric_names[m], static_cast<int>(values.size()), kNaN, kNaN,
                       kNaN,      kNaN,                    kNaN};
      if (!values.empty()) {
        double sum = 0.0;
        for (double x : values) sum += x;
        agg.mean = sum / static_cast<double>(values.size());
        double ss = 0.0;
        for (double x : values) ss += (x - agg.mean) * (x - agg.mean);
        agg.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
        std::sort(values.begin(), values.end());
        agg.min = values.front();
        agg.max = values.back();
        const std::size_t mid = values.size() / 2;
        agg.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
      }
      out.push_back(std::move(agg));
    }
  }
  return out;
}

void write_trials_csv(std::ostream& out, const ExperimentReport& report) {
  out << "trial,seed";
  for (const auto& p : report.param_names) out << ',' << p;
  for (const auto& m : report.metric_names) out << ',' << m;
  out << '\n';
  for (const auto& row : report.rows) {
    out << row.trial << ',' << row.seed;
    for (double p : row.params) out << ',' << format_double(p);
    for (double m : row.metrics) out << ',' << format_double(m);
    out << '\n';
  }
}

void write_summary_csv(std::ostream& out, const ExperimentReport& report) {
  for (const auto& p : report.param_names) out << p << ',';
  out << "metric,count,mean,sd,min,median,max\n";
  for (const auto& a : report.aggregates) {
    for (double p : a.params) out << format_double(p) << ',';
    out << a.metric << ',' << a.count << ',' << format_double(a.mean) << ',' << format_double(a.sd) << ','
        << format_double(a.min) << ',' << format_double(a.median) << ',' << format_double(a.max) << '\n';
  }
}

ExperimentReport read_trials_csv(std::istream& in, std::size_t param_count) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "line 1: missing header");
  const auto header = split_list(trim(line));
  if (header.size() < 2 + param_count || header[0] != "trial" || header[1] != "seed") {
    throw Error(ErrorKind::ParseError, "line 1: expected 'trial,seed,...' header");
  }
  ExperimentReport report;
  report.param_names.assign(header.begin() + 2, header.begin() + 2 + static_cast<long>(param_count));
  report.metric_names.assign(header.begin() + 2 + static_cast<long>(param_count), header.end());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_list(trim(line));
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::InconsistentWidth, "line " + std::to_string(line_no) + ": expected " +
                                                    std::to_string(header.size()) + " fields");
    }
    TrialRow row;
    try {
      row.trial = static_cast<int>(parse_int("trial", fields[0]));
      std::uint64_t seed = 0;
      const auto [p, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), seed);
      if (ec != std::errc() || p != fields[1].data() + fields[1].size()) bad_value("seed", fields[1], "a seed");
      row.seed = seed;
    } catch (const Error& e) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.detail());
    }
    for (std::size_t j = 2; j < fields.size(); ++j) {
      double value = 0.0;
      const auto& f = fields[j];
      const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
      if (f.empty() || ec != std::errc() || p != f.data() + f.size()) {
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": cannot parse '" + f + "'");
      }
      (j < 2 + param_count ? row.params : row.metrics).push_back(value);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  auto open = [&](const std::string& suffix) {
    const auto path = dir / (report.name + "_" + suffix + ".csv");
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    return out;
  };
  {
    auto out = open("trials");
    write_trials_csv(out, report);
  }
  {
    auto out = open("summary");
    write_summary_csv(out, report);
  }
  for (const auto& [suffix, content] : report.attachments) {
    auto out = open(suffix);
    out << content;
  }
}

void print_summary(std::ostream& out, const ExperimentReport& report) {
  out << report.name << ": " << report.rows.size() << " trial rows\n";
  for (const auto& a : report.aggregates) {
    out << "  ";
    for (std::size_t i = 0; i < a.params.size(); ++i) {
      out << report.param_names[i] << '=' << a.params[i] << ' ';
    }
    out << a.metric << ": mean " << std::setprecision(6) << a.mean << " sd " << a.sd << " min " << a.min
        << " median " << a.median << " max " << a.max << " (n=" << a.count << ")\n";
  }
}

ExperimentReport run(const ExperimentConfig& config) {
  validate(config);
  ExperimentReport report;
  report.name = std::string(short_name(config.experiment));
  auto table_rows = std::make_shared<std::vector<std::string>>();
  Plan plan = make_plan(config, report.attachments, table_rows);
  report.param_names = plan.param_names;
  report.metric_names = plan.metric_names;

  const auto results = run_jobs(plan.jobs, config.threads);
  for (std::size_t i = 0; i < plan.jobs.size(); ++i) {
    report.rows.push_back(TrialRow{plan.jobs[i].trial, plan.jobs[i].seed, plan.jobs[i].params, results[i]});
  }
  for (auto& [suffix, content] : report.attachments) {
    if (suffix == "tables") {
      for (const auto& rows : *table_rows) content += rows;
    }
  }
  report.aggregates = aggregate(report);
  return report;
}

double fig3_trial(Index n, Index d, std::uint64_t seed, double c) {
  const Mixture m = make_mixture(MixtureSpec{n, 2, c, 1.0, CovarianceMode::SphericalShared, derive_seed(seed, 0)});
  return mixture_separation(project_mixture(random_orthonormal(n, d, derive_seed(seed, 1)), m));
}

Index fig4_dimension(Index k) {
  return static_cast<Index>(std::lround(10.0 * std::log(static_cast<double>(k))));
}

double fig4_trial(Index k, Index n, Index d, double c, std::uint64_t seed) {
  const Mixture m = make_mixture(MixtureSpec{n, k, c, 1.0, CovarianceMode::SphericalShared, derive_seed(seed, 0)});
  return mixture_separation(project_mixture(random_orthonormal(n, d, derive_seed(seed, 1)), m));
}

double projected_eccentricity(const Matrix& cov, Index d, std::uint64_t seed) {
  const ProjectionMatrix p = random_orthonormal(cov.rows(), d, seed);
  const Matrix& a = p.rows();
  Matrix projected = a * cov.selfadjointView<Eigen::Lower>() * a.transpose();
  projected = 0.5 * (projected + projected.transpose());
  return spectral_summary(projected).eccentricity;
}

double fig5_trial(double eccentricity, Index n, Index d, std::uint64_t seed) {
  const Matrix cov = eccentric_covariance(n, eccentricity, CovarianceMode::DiagonalDistinct, derive_seed(seed, 0));
  return projected_eccentricity(cov, d, derive_seed(seed, 1));
}

SeparationTables fig7_trial(const MixtureSpec& spec, Index d, Index samples, std::uint64_t seed) {
  MixtureSpec local = spec;
  local.seed = derive_seed(seed, 0);
  const Mixture m = make_mixture(local);
  const Dataset data = sample(m, samples, derive_seed(seed, 1));
  const ProjectionMatrix by_pca = pca(data, d);
  const ProjectionMatrix by_rp = random_orthonormal(spec.n, d, derive_seed(seed, 2));
  return {separation_table(project_mixture(by_pca, m)), separation_table(project_mixture(by_rp, m))};
}

Outcome compare_loglik(double rp, double regular) {
  if (std::isfinite(rp) && std::isfinite(regular) &&
      std::abs(rp - regular) <= kMatchTolerance * std::max(std::abs(rp), std::abs(regular))) {
    return Outcome::Match;
  }
  return rp > regular ? Outcome::Beat : Outcome::Lose;
}

EmComparison em_compare_trial(const EmCompareSetup& setup, std::uint64_t seed) {
  MixtureSpec spec = setup.spec;
  spec.seed = derive_seed(seed, 0);
  const Mixture truth = make_mixture(spec);
  const Dataset train = sample(truth, setup.train_size, derive_seed(seed, 1));
  const Dataset test = sample(truth, setup.test_size, derive_seed(seed, 2));
  const double failed = -std::numeric_limits<double>::infinity();

  EmComparison out;
  try {
    const FitResult fit = run_em(train, spec.k, setup.restriction, derive_seed(seed, 3), setup.em);
    out.regular_iterations = fit.iterations;
    out.regular_test_loglik = test_loglik(fit.model, test);
    out.regular_success = centers_recovered(fit.model, truth).success;
  } catch (const Error&) {
    out.regular_failed = true;
    out.regular_success = false;
    out.regular_test_loglik = failed;
  }
  try {
    const RpEmResult fit = rp_em(train, spec.k, setup.d, setup.restriction, derive_seed(seed, 4), setup.em);
    out.rp_low_iterations = fit.low.iterations;
    out.rp_test_loglik = test_loglik(fit.high.model, test);
    out.rp_success = centers_recovered(fit.high.model, truth).success;
  } catch (const Error&) {
    out.rp_failed = true;
    out.rp_success = false;
    out.rp_test_loglik = failed;
  }
  out.outcome = compare_loglik(out.rp_test_loglik, out.regular_test_loglik);
  return out;
}

Mixture collapse_mixture(Index k) {
  if (k % 2 != 0) throw Error(ErrorKind::BadDims, "the symmetric arrangement needs an even k");
  if (k < 4) throw Error(ErrorKind::BadDims, "the symmetric arrangement needs k >= 4 (ambient dimension k/2 >= 2)");
  const Index n = k / 2;
  auto identity = std::make_shared<const Covariance>(Matrix::Identity(n, n));
  std::vector<Gaussian> components;
  for (Index j = 1; j <= n; ++j) {
    for (double sign : {1.0, -1.0}) {
      Vector mean = Vector::Zero(n);
      mean(j - 1) = sign * static_cast<double>(j);
      components.emplace_back(mean, identity);
    }
  }
  return Mixture(std::move(components), Vector::Constant(k, 1.0 / static_cast<double>(k)));
}

CollapseResult pca_collapse_trial(Index k, Index samples, std::uint64_t seed) {
  const Mixture m = collapse_mixture(k);
  const Index n = k / 2;
  const Dataset data = sample(m, samples, derive_seed(seed, 0));
  CollapseResult out;
  out.original = mixture_separation(m);
  out.pca_below = mixture_separation(project_mixture(pca(data, n - 1), m));
  out.pca_full = mixture_separation(project_mixture(pca(data, n), m));
  out.rp_dim = std::min(fig4_dimension(k), n);
  out.rp = mixture_separation(project_mixture(random_orthonormal(n, out.rp_dim, derive_seed(seed, 1)), m));
  return out;
}

DigitData digit_surrogate(std::uint64_t seed, Index train_per_class, Index test_per_class) {
  constexpr Index kClasses = 10;
  const Mixture m = make_mixture(MixtureSpec{256, kClasses, 0.63, 1e4, CovarianceMode::RotatedDistinct, seed});
  auto draw = [&](Index per_class, std::uint64_t stream) {
    Dataset points(per_class * kClasses, m.dim());
    std::vector<int> labels;
    for (Index c = 0; c < kClasses; ++c) {
      const Mixture single({m.component(c)}, Vector::Ones(1));
      points.middleRows(c * per_class, per_class) =
          sample(single, per_class, derive_seed(seed, stream + static_cast<std::uint64_t>(c)));
      labels.insert(labels.end(), static_cast<std::size_t>(per_class), static_cast<int>(c));
    }
    return make_labeled(std::move(points), std::move(labels), static_cast<int>(kClasses));
  };
  return DigitData{draw(train_per_class, 100), draw(test_per_class, 200)};
}

double digit_trial(const DigitData& data, Index d, std::uint64_t seed, const TrainOptions& options) {
  return evaluate(train(data.train, d, seed, options), data.test);
}

}  // namespace rpmix
