#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rpmix/classifier.hpp"
#include "rpmix/em.hpp"
#include "rpmix/error.hpp"
#include "rpmix/experiment.hpp"
#include "rpmix/io.hpp"
#include "rpmix/projection.hpp"
#include "rpmix/synthesis.hpp"

namespace fs = std::filesystem;
using namespace rpmix;

namespace {

constexpr const char* kColumns = R"(CSV files:
  points.csv           x1,...,xn per row, no header (input to `em` and `project`)
  labeled.csv          label,x1,...,xn per row, no header (input to `classify`)
  projected.csv        y1,...,yd per row, the projected points
  loglik.csv           iteration,loglik; iteration 0 is the initial model
  predictions.csv      row,label,predicted
  clusters*.csv        class,<one column per class>,eccentricity,rank_deficient
  <exp>_trials.csv     trial,seed,<parameters>,<metrics>; one row per trial
  <exp>_summary.csv    <parameters>,metric,count,mean,sd,min,median,max;
                       non-finite trial values (failed runs) are excluded
  fig7_tables.csv      trial,seed,method,row,<one column per component>

Experiment parameters and metrics:
  fig3          n,d            separation
  fig4          k,n,d          separation
  fig5          E,n,d          eccentricity
  fig6          d              eccentricity
  fig7          (none)         pca_min,pca_max,rp_min,rp_max
  fig8          n              regular_success,rp_success,regular_failed,rp_failed,
  second_em                    regular_iterations,rp_low_iterations,regular_test_loglik,
                               rp_test_loglik,beat,match,lose
  fig9          d              accuracy
  pca_collapse  k,rp_dim       original,pca_below,pca_full,rp
)";

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_trace(const fs::path& path, const FitResult& fit) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << "iteration,loglik\n";
  for (std::size_t i = 0; i < fit.loglik_trace.size(); ++i) {
    out << i << ',' << format_double(fit.loglik_trace[i]) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random projection and EM for Gaussian mixtures"};
  app.footer(kColumns);
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a c-separated mixture and sample from it");
  MixtureSpec spec;
  Index synth_samples = 1000;
  std::string mode_name = "SphericalShared";
  fs::path synth_out = ".";
  synth->add_option("--n", spec.n, "Dimension")->capture_default_str();
  synth->add_option("--k", spec.k, "Components")->capture_default_str();
  synth->add_option("--c", spec.c, "Separation")->capture_default_str();
  synth->add_option("--E", spec.eccentricity, "Eccentricity")->capture_default_str();
  synth->add_option("--mode", mode_name,
                    "SphericalShared, DiagonalDistinct, RotatedDistinct or FullShared")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Seed")->capture_default_str();
  synth->add_option("--samples", synth_samples, "Points to draw")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory (mixture.json, points.csv, labeled.csv)");

  // project
  auto* project = app.add_subcommand("project", "Project a dataset (and optionally a mixture)");
  fs::path project_data_path;
  fs::path project_mixture_path;
  Index project_d = 10;
  std::string kind_name = "OrthonormalRP";
  std::uint64_t project_seed = 0;
  fs::path project_out = ".";
  project->add_option("--data", project_data_path, "points.csv to project")->required()->check(CLI::ExistingFile);
  project->add_option("--d", project_d, "Target dimension")->capture_default_str();
  project->add_option("--kind", kind_name, "OrthonormalRP, UniformRP or PCA")->capture_default_str();
  project->add_option("--mixture", project_mixture_path, "Mixture document to push through the same map");
  project->add_option("--seed", project_seed, "Seed")->capture_default_str();
  project->add_option("--out", project_out, "Output directory (projection.json, projected.csv)");

  // em
  auto* em = app.add_subcommand("em", "Fit a mixture with EM, optionally through a random projection");
  fs::path em_data_path;
  fs::path em_test_path;
  Index em_k = 5;
  Index em_rp_d = 0;
  std::string restriction_name = "SharedFull";
  std::uint64_t em_seed = 0;
  EmOptions em_options;
  fs::path em_out = ".";
  em->add_option("--data", em_data_path, "points.csv training data")->required()->check(CLI::ExistingFile);
  em->add_option("--test", em_test_path, "points.csv held-out data")->check(CLI::ExistingFile);
  em->add_option("--k", em_k, "Components")->capture_default_str();
  em->add_option("--restriction", restriction_name, "FullDistinct or SharedFull")->capture_default_str();
  em->add_option("--rp-d", em_rp_d, "Run the projected variant with this dimension (0 = regular EM)");
  em->add_option("--tol", em_options.tol, "Relative log-likelihood tolerance")->capture_default_str();
  em->add_option("--max-iter", em_options.max_iter, "Iteration cap")->capture_default_str();
  em->add_option("--seed", em_seed, "Seed")->capture_default_str();
  em->add_option("--out", em_out, "Output directory (fit.json, loglik.csv)");

  // classify
  auto* classify = app.add_subcommand("classify", "Train a per-class mixture classifier and evaluate it");
  fs::path train_path;
  fs::path test_path;
  Index classify_d = 40;
  TrainOptions train_options;
  bool no_priors = false;
  bool analysis = false;
  std::uint64_t classify_seed = 0;
  fs::path classify_out = ".";
  classify->add_option("--train", train_path, "labeled.csv training data")->required();
  classify->add_option("--test", test_path, "labeled.csv test data")->required();
  classify->add_option("--d", classify_d, "Projected dimension")->capture_default_str();
  classify->add_option("--k", train_options.per_class_k, "Components per class")->capture_default_str();
  classify->add_flag("--no-priors", no_priors, "Drop the class prior term from the score");
  classify->add_flag("--analysis", analysis, "Also write cluster separation tables before and after projection");
  classify->add_option("--seed", classify_seed, "Seed")->capture_default_str();
  classify->add_option("--out", classify_out, "Output directory (result.json, predictions.csv)");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "Run a seeded experiment and write CSV reports");
  std::string experiment_name;
  std::optional<fs::path> config_path;
  std::optional<std::uint64_t> base_seed;
  std::optional<int> trials;
  std::optional<int> threads;
  std::vector<std::string> settings;
  fs::path experiment_out = ".";
  std::string names;
  for (ExperimentKind k : all_experiments()) names += (names.empty() ? "" : ", ") + std::string(short_name(k));
  experiment->add_option("name", experiment_name, "One of: " + names)->required();
  experiment->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  experiment->add_option("--seed", base_seed, "Base seed; trial t uses base_seed + t");
  experiment->add_option("--trials", trials, "Trials per parameter setting");
  experiment->add_option("--threads", threads, "Worker threads");
  experiment->add_option("--set", settings, "Override key=value (repeatable)");
  experiment->add_option("--out", experiment_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      spec.mode = covariance_mode_from_string(mode_name);
      const Mixture m = make_mixture(spec);
      const LabeledSample drawn = sample_labeled(m, synth_samples, spec.seed + 1);
      ensure_dir(synth_out);
      write_json(synth_out / "mixture.json", mixture_to_json(m));
      write_dataset_csv(synth_out / "points.csv", drawn.points);
      write_labeled_csv(synth_out / "labeled.csv", make_labeled(drawn.points, drawn.components, static_cast<int>(spec.k)));
      std::cout << "mixture: n=" << m.dim() << " k=" << m.size() << " separation=" << mixture_separation(m) << '\n';
    } else if (*project) {
      const Dataset data = read_dataset_csv(project_data_path);
      const ProjectionKind kind = projection_kind_from_string(kind_name);
      const ProjectionMatrix p = kind == ProjectionKind::PCA         ? pca(data, project_d)
                                 : kind == ProjectionKind::UniformRP ? random_uniform(data.cols(), project_d, project_seed)
                                                                     : random_orthonormal(data.cols(), project_d, project_seed);
      ensure_dir(project_out);
      write_json(project_out / "projection.json", projection_to_json(p));
      write_dataset_csv(project_out / "projected.csv", project_data(p, data));
      if (!project_mixture_path.empty()) {
        const Mixture projected = project_mixture(p, mixture_from_json(read_json(project_mixture_path)));
        write_json(project_out / "projected_mixture.json", mixture_to_json(projected));
        std::cout << "projected separation: " << mixture_separation(projected) << '\n';
      }
    } else if (*em) {
      const Dataset train_data = read_dataset_csv(em_data_path);
      const CovarianceRestriction restriction = restriction_from_string(restriction_name);
      ensure_dir(em_out);
      std::optional<FitResult> fitted;
      if (em_rp_d > 0) {
        RpEmResult result = rp_em(train_data, em_k, em_rp_d, restriction, em_seed, em_options);
        write_json(em_out / "projection.json", projection_to_json(result.projection));
        write_json(em_out / "low_fit.json", fit_to_json(result.low));
        write_trace(em_out / "low_loglik.csv", result.low);
        std::cout << "low-dimensional iterations: " << result.low.iterations << '\n';
        fitted.emplace(std::move(result.high));
      } else {
        fitted.emplace(run_em(train_data, em_k, restriction, em_seed, em_options));
        std::cout << "iterations: " << fitted->iterations << (fitted->converged ? " (converged)" : " (cap reached)")
                  << '\n';
      }
      const FitResult& fit = *fitted;
      write_json(em_out / "fit.json", fit_to_json(fit));
      write_trace(em_out / "loglik.csv", fit);
      std::cout << "train loglik: " << fit.loglik_trace.back() << '\n';
      if (!em_test_path.empty()) {
        std::cout << "test loglik: " << test_loglik(fit.model, read_dataset_csv(em_test_path)) << '\n';
      }
    } else if (*classify) {
      train_options.use_priors = !no_priors;
      const LabeledDataset train_set = ingest(train_path);
      const LabeledDataset test_set = ingest(test_path);
      const ClassMixtureModel model = train(train_set, classify_d, classify_seed, train_options);
      const auto predicted = predict_all(model, test_set.points);
      const double accuracy = evaluate(model, test_set);
      ensure_dir(classify_out);
      {
        std::ofstream out(classify_out / "predictions.csv");
        out << "row,label,predicted\n";
        for (std::size_t r = 0; r < predicted.size(); ++r) {
          out << r << ',' << test_set.labels[r] << ',' << predicted[r] << '\n';
        }
      }
      nlohmann::json result{{"accuracy", accuracy},
                            {"d", classify_d},
                            {"per_class_k", train_options.per_class_k},
                            {"em_iterations", model.em_iterations},
                            {"projection", projection_to_json(model.projection)}};
      write_json(classify_out / "result.json", result);
      if (analysis) {
        std::ofstream raw(classify_out / "clusters.csv");
        write_cluster_table(raw, cluster_analysis(train_set));
        std::ofstream projected(classify_out / "clusters_projected.csv");
        write_cluster_table(projected, cluster_analysis(train_set, model.projection));
      }
      std::cout << "accuracy: " << accuracy << '\n';
    } else if (*experiment) {
      const ExperimentKind kind = experiment_from_string(experiment_name);
      ExperimentConfig config = config_path ? read_config(*config_path, kind) : default_config(kind);
      if (base_seed) config.base_seed = *base_seed;
      if (trials) config.trials = *trials;
      if (threads) config.threads = *threads;
      for (const auto& setting : settings) {
        const auto eq = setting.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, "--set expects key=value, got '" + setting + "'");
        config.overrides[setting.substr(0, eq)] = setting.substr(eq + 1);
      }
      validate(config);
      const ExperimentReport report = run(config);
      write_report(report, experiment_out);
      print_summary(std::cout, report);
    }
  } catch (const std::exception& e) {
    std::cerr << "rpmix: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
