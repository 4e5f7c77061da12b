// Command-line front end. Exit codes: 0 ok, 1 config error, 2 data error,
// 3 numeric failure.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "shiftbench/analyzer.hpp"
#include "shiftbench/config.hpp"
#include "shiftbench/csv.hpp"
#include "shiftbench/diversity.hpp"
#include "shiftbench/errors.hpp"
#include "shiftbench/experiment.hpp"
#include "shiftbench/metrics.hpp"
#include "shiftbench/report.hpp"
#include "shiftbench/stable_hash.hpp"
#include "shiftbench/trainer.hpp"

namespace fs = std::filesystem;
using namespace shiftbench;

namespace {

struct Common {
  std::string config;
  std::string out;
  int jobs = 1;
  bool resume = false;
  std::optional<std::uint64_t> seed;
};

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ExperimentConfig experiment_config(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  auto j = read_json(c.config);
  if (c.seed) j["base_seed"] = *c.seed;
  return config_from_json(j, fs::path(c.config).parent_path());
}

void add_common(CLI::App* cmd, Common& c, bool jobs = false) {
  cmd->add_option("--config", c.config, "experiment configuration (JSON)");
  cmd->add_option("--out", c.out, "output path")->required();
  cmd->add_option("--seed", c.seed, "override base_seed");
  if (jobs) cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shortcut-learning benchmark: bias injection, diversity and trap splits, training, analysis"};
  app.require_subcommand(1);
  Common c;

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset of a config");
  add_common(synth, c, true);

  std::string manifest, scenario = "same_same";
  double bias = 50;
  auto* inject = app.add_subcommand("inject", "inject colored squares into a manifest");
  add_common(inject, c, true);
  inject->add_option("--manifest", manifest, "source manifest CSV")->required();
  inject->add_option("--bias", bias, "training bias percent (training mode)");
  inject->add_option("--scenario", scenario, "test scenario; overrides --bias when given");

  auto* split = app.add_subcommand("split", "superclass task and diversity split");
  add_common(split, c);

  double lambda = 1.0;
  auto* trap = app.add_subcommand("trap", "optimize a trap split of a manifest");
  add_common(trap, c, true);
  trap->add_option("--manifest", manifest, "manifest with artifact columns")->required();
  trap->add_option("--lambda", lambda, "interpolation toward the trap split")->check(CLI::Range(0.0, 1.0));

  std::string train_m, val_m;
  auto* train_cmd = app.add_subcommand("train", "train a model on materialized manifests");
  add_common(train_cmd, c);
  train_cmd->add_option("--train", train_m, "training manifest CSV")->required();
  train_cmd->add_option("--val", val_m, "validation manifest CSV")->required();

  std::string model_path;
  auto* evaluate = app.add_subcommand("evaluate", "score a manifest with a trained model");
  add_common(evaluate, c);
  evaluate->add_option("--model", model_path, "trained model file")->required();
  evaluate->add_option("--manifest", manifest, "manifest CSV to score")->required();

  std::string results, coefficients, metric = "auc";
  std::vector<double> exclude;
  int resamples = 1000;
  auto* analyze_cmd = app.add_subcommand("analyze", "fit angular coefficients from results.csv");
  add_common(analyze_cmd, c);
  analyze_cmd->add_option("--results", results, "results CSV")->required();
  analyze_cmd->add_option("--exclude", exclude, "normalized biases kept out of the fits");
  analyze_cmd->add_option("--resamples", resamples, "bootstrap resamples")->check(CLI::NonNegativeNumber);

  auto* report = app.add_subcommand("report", "render report.svg");
  add_common(report, c);
  report->add_option("--results", results, "results CSV")->required();
  report->add_option("--coefficients", coefficients, "coefficients CSV")->required();
  report->add_option("--metric", metric, "metric to plot");

  auto* run = app.add_subcommand("run", "run an experiment end to end");
  add_common(run, c, true);
  run->add_flag("--resume", c.resume, "skip (bias, replica) runs already on disk");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const fs::path out = c.out;
    if (*synth) {
      const auto cfg = experiment_config(c);
      if (!cfg.synthetic) throw ConfigError("config has no synthetic data source");
      generate_synthetic_dataset(*cfg.synthetic, out, c.jobs);
    } else if (*inject) {
      BiasSpec spec;
      std::uint64_t seed = c.seed.value_or(0);
      SameDiffMode mode = SameDiffMode::Reversed;
      if (!c.config.empty()) {
        const auto cfg = experiment_config(c);
        spec = cfg.bias;
        seed = cfg.base_seed;
        mode = cfg.same_diff_mode;
      }
      spec.seed = seed;
      const auto m = load_manifest(manifest);
      MaterializedSet set;
      if (inject->count("--scenario")) {
        set = build_test_scenario(m, {parse_scenario(scenario), mode}, spec);
      } else {
        spec.training_bias_percent = bias;
        spec.validate();
        set = inject_biased(m, spec);
      }
      write_materialized(set, out / "manifest.csv", out / "images");
    } else if (*split) {
      const auto cfg = experiment_config(c);
      const auto m = cfg.synthetic ? generate_synthetic_dataset(*cfg.synthetic, out / "data", c.jobs)
                                   : load_manifest(*cfg.manifest_path);
      const auto d = cfg.diversity.value_or(DiversityConfig{});
      const auto task = build_superclass_tasks(m, stable_hash(cfg.base_seed, "task"), d.n_train_sub, d.n_shift_sub);
      const auto parts = split_diversity(m, task, cfg.train_fraction, cfg.val_fraction);
      const auto tests = equalize_test_sizes({parts.iid_test, parts.shifted_test}, cfg.test_size,
                                             stable_hash(cfg.base_seed, "equalize"));
      csv::write_atomic(out / "task.json", to_json(task).dump(2) + "\n");
      const std::pair<const char*, const DatasetManifest*> files[] = {
          {"train", &parts.train}, {"val", &parts.val}, {"test_iid", &tests[0]}, {"test_shifted", &tests[1]}};
      for (const auto& [name, part] : files) save_manifest(part->rebased(out), out / (std::string(name) + ".csv"));
    } else if (*trap) {
      TrapConfig tc;
      std::uint64_t seed = c.seed.value_or(0);
      if (!c.config.empty()) {
        const auto cfg = experiment_config(c);
        if (cfg.trap) tc = *cfg.trap;
        seed = cfg.base_seed;
      }
      tc.anneal.jobs = c.jobs;
      const auto m = load_manifest(manifest);
      const auto random = random_trap_split(m, tc.test_fraction, seed);
      const auto best = anneal_trap_split(m, tc.test_fraction, tc.anneal, seed).best;
      const auto chosen = interpolate_split(random, best, lambda, m, stable_hash(seed, "interpolate"));
      csv::write_atomic(out, to_json(chosen).dump(2) + "\n");
    } else if (*train_cmd) {
      ModelSpec spec;
      if (!c.config.empty()) spec = experiment_config(c).model;
      if (c.seed) spec.seed = *c.seed;
      save_model(train(load_manifest(train_m), load_manifest(val_m), spec), out);
    } else if (*evaluate) {
      const auto model = load_model(model_path);
      const auto m = load_manifest(manifest);
      const auto scores = predict_scores(model, m);
      csv::write_atomic(out, scores_to_csv(scores));
      std::map<std::string, int> labels;
      for (const auto& r : m.records) labels[r.sample_id] = r.label;
      std::vector<double> s, y;
      for (const auto& [id, score] : scores) {
        s.push_back(score);
        y.push_back(labels.at(id));
      }
      std::cout << "auc," << csv::format_double(auc(s, y)) << "\n"
                << "balanced_accuracy," << csv::format_double(balanced_accuracy(s, y)) << "\n";
    } else if (*analyze_cmd) {
      AnalysisOptions ao;
      ao.excluded_biases = exclude;
      ao.bootstrap_resamples = resamples;
      ao.seed = stable_hash(c.seed.value_or(0), "analysis");
      const auto res = analyze(parse_results_csv(results), ao);
      csv::write_atomic(out / "coefficients.csv", coefficients_to_csv(res.fits));
      csv::write_atomic(out / "attenuation.csv", attenuation_to_csv(res.attenuation));
      csv::write_atomic(out / "confidence.csv", confidence_to_csv(res.confidence));
      csv::write_atomic(out / "aggregates.csv", aggregates_to_csv(res.points));
      std::set<std::string> metrics;
      for (const auto& f : res.fits) metrics.insert(f.key.metric_name);
      for (const auto& metric : metrics) {
        std::vector<RegressionFit> subset;
        for (const auto& f : res.fits)
          if (f.key.metric_name == metric) subset.push_back(f);
        std::cout << "metric: " << metric << "\n" << render_table(angular_coefficient_table(subset)) << "\n";
      }
    } else if (*report) {
      render_report(results, coefficients, out, metric);
    } else if (*run) {
      const auto cfg = experiment_config(c);
      const auto res = run_experiment(cfg, out, {c.jobs, c.resume, log_line});
      std::cout << res.records.size() << " records written to " << (out / "results.csv").string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
