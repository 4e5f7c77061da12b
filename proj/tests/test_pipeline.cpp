#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>

#include "shiftbench/errors.hpp"
#include "shiftbench/experiment.hpp"
#include "shiftbench/report.hpp"
#include "support.hpp"

using namespace shiftbench;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "experiment_id": "small",
    "data_source": {"synthetic": {"samples_per_class": 100, "image_size": 32, "noise_level": 0.5}},
    "bias_sweep": [52, 80],
    "control_biases": [50],
    "replicas": 2,
    "model": {"kind": "logistic", "input_side": 16, "max_epochs": 3},
    "split": {"train_fraction": 0.6, "val_fraction": 0.2, "test_size": 20},
    "diversity": {"n_train_sub": 3, "n_shift_sub": 2},
    "base_seed": 11,
    "bootstrap_resamples": 20
  })");
}

const std::vector<std::string> kArtifacts{"results.csv", "coefficients.csv", "attenuation.csv", "confidence.csv",
                                          "aggregates.csv", "coefficients.txt", "grid.json", "report.svg"};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SHIFTBENCH_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

}  // namespace

TEST_CASE("end-to-end run covers every cell, bias and replica") {
  testing::TempDir dir("pipeline_full");
  const auto cfg = config_from_json(small_config());
  const auto res = run_experiment(cfg, dir.path());

  // (2 sweep + 1 control) x 2 replicas x 8 cells x 2 metrics
  CHECK(res.records.size() == 3 * 2 * 8 * 2);
  REQUIRE(res.cells.size() == 8);
  for (const auto& c : res.cells) {
    CHECK(c.available);
    CHECK(c.completed);
  }
  for (const auto& name : kArtifacts) CHECK(fs::exists(dir / name));
  CHECK(fs::exists(dir / "manifests" / "task.json"));
  CHECK(std::distance(fs::directory_iterator(dir / "models"), fs::directory_iterator{}) == 6);

  // Controls stay out of the fits.
  const auto coeffs = testing::slurp(dir / "coefficients.csv");
  CHECK(count(coeffs, ",2\n") == 16);
  CHECK(parse_results_csv(dir / "results.csv") == res.records);
}

TEST_CASE("resume recomputes nothing and reproduces every artifact") {
  testing::TempDir dir("pipeline_resume");
  const auto cfg = config_from_json(small_config());
  run_experiment(cfg, dir.path());
  std::map<std::string, std::string> before;
  for (const auto& name : kArtifacts) before[name] = testing::slurp(dir / name);

  std::vector<std::string> log;
  RunOptions opt;
  opt.resume = true;
  opt.log = [&](const std::string& m) { log.push_back(m); };
  run_experiment(cfg, dir.path(), opt);
  CHECK(std::count_if(log.begin(), log.end(), [](const std::string& m) { return m.starts_with("skip "); }) == 6);
  CHECK(std::none_of(log.begin(), log.end(), [](const std::string& m) { return m.starts_with("run "); }));
  for (const auto& name : kArtifacts) CHECK(testing::slurp(dir / name) == before[name]);

  // Losing one fragment reruns exactly that run.
  fs::remove(dir / "runs" / "b80_r1.csv");
  log.clear();
  run_experiment(cfg, dir.path(), opt);
  CHECK(std::count(log.begin(), log.end(), std::string("run b80_r1")) == 1);
  CHECK(std::count_if(log.begin(), log.end(), [](const std::string& m) { return m.starts_with("run "); }) == 1);
  for (const auto& name : kArtifacts) CHECK(testing::slurp(dir / name) == before[name]);
}

TEST_CASE("artifacts are byte-identical across runs and worker counts") {
  testing::TempDir a("pipeline_det_a"), b("pipeline_det_b");
  const auto cfg = config_from_json(small_config());
  run_experiment(cfg, a.path());
  RunOptions opt;
  opt.jobs = 3;
  run_experiment(cfg, b.path(), opt);
  for (const auto& name : kArtifacts) CHECK(testing::slurp(a / name) == testing::slurp(b / name));
}

TEST_CASE("a different base seed changes the results") {
  testing::TempDir a("pipeline_seed_a"), b("pipeline_seed_b");
  auto j = small_config();
  run_experiment(config_from_json(j), a.path());
  j["base_seed"] = 12;
  run_experiment(config_from_json(j), b.path());
  CHECK(testing::slurp(a / "results.csv") != testing::slurp(b / "results.csv"));
}

TEST_CASE("cells without unseen colors or shifted subclasses are marked unavailable") {
  testing::TempDir dir("pipeline_grid");
  auto j = small_config();
  j.erase("diversity");
  j["bias"] = {{"unseen_colors", nullptr}};
  j["metrics"] = {"auc"};
  const auto res = run_experiment(config_from_json(j), dir.path());
  REQUIRE(res.cells.size() == 4);
  const auto* diff = res.find(Scenario::Diff, kInDistribution);
  REQUIRE(diff);
  CHECK_FALSE(diff->available);
  CHECK_FALSE(diff->completed);
  CHECK(res.find(Scenario::SameSame, kInDistribution)->completed);
  CHECK(res.find(Scenario::SameSame, "diversity-shift-1") == nullptr);
  CHECK(res.records.size() == 3 * 2 * 3);

  const auto grid = nlohmann::json::parse(testing::slurp(dir / "grid.json"));
  CHECK(grid["cells"][3]["scenario"] == "diff");
  CHECK(grid["cells"][3]["available"] == false);

  const auto svg = testing::slurp(dir / "report.svg");
  CHECK(count(svg, ">unavailable</text>") == 1);
}

TEST_CASE("report renders one panel per scenario for a single experiment") {
  std::vector<RunRecord> rs;
  std::vector<RegressionFit> fits;
  for (auto s : kAllScenarios) {
    for (double b : {0.52, 0.8}) rs.push_back({"e", s, kInDistribution, b, 0, "auc", b});
    RegressionFit f;
    f.key = {"e", s, kInDistribution, "auc"};
    f.slope = 1.0;
    fits.push_back(f);
  }
  const auto svg = render_report_svg(rs, fits);
  CHECK(svg == render_report_svg(rs, fits));
  CHECK((svg.starts_with("<svg") || svg.starts_with("<?xml")));
  CHECK(count(svg, "<polyline") == 4);
  CHECK(count(svg, ">unavailable</text>") == 0);
  for (auto s : kAllScenarios) CHECK(svg.find(std::string(to_string(s))) != std::string::npos);

  rs.erase(std::remove_if(rs.begin(), rs.end(), [](const RunRecord& r) { return r.scenario == Scenario::Diff; }),
           rs.end());
  fits.pop_back();
  CHECK(count(render_report_svg(rs, fits), ">unavailable</text>") == 1);
}

TEST_CASE("trap mode runs end to end") {
  testing::TempDir dir("pipeline_trap");
  auto j = nlohmann::json::parse(R"({
    "experiment_id": "trap",
    "data_source": {"synthetic": {"samples_per_class": 60, "image_size": 32, "noise_level": 0.5,
                                  "artifacts": [{"name": "ruler", "prevalence": 0.3}]}},
    "bias_sweep": [0, 1],
    "replicas": 1,
    "model": {"kind": "logistic", "input_side": 16, "max_epochs": 3},
    "trap": {"test_fraction": 0.3, "val_fraction": 0.2, "iterations": 500},
    "diversity": {"n_train_sub": 3, "n_shift_sub": 2},
    "base_seed": 4,
    "bootstrap_resamples": 10,
    "metrics": ["auc"]
  })");
  const auto res = run_experiment(config_from_json(j), dir.path());
  const auto* nsc = res.find(Scenario::NoShortcuts, kInDistribution);
  CHECK((nsc == nullptr || !nsc->completed));
  CHECK(res.find(Scenario::SameSame, kInDistribution)->completed);
  CHECK(res.find(Scenario::Diff, "diversity-shift-1")->completed);
  CHECK(fs::exists(dir / "manifests" / "trap" / "r0.json"));
  CHECK(fs::exists(dir / "manifests" / "runs" / "b1_r0_split.json"));
  CHECK(!res.records.empty());
}

TEST_CASE("invalid configurations are rejected") {
  auto j = small_config();
  j["replicas"] = 0;
  CHECK_THROWS_AS(config_from_json(j).validate(), ConfigError);
  j = small_config();
  j["bias_sweep"] = {52, 52};
  CHECK_THROWS_AS(config_from_json(j).validate(), ConfigError);
  j = small_config();
  j["colour"] = 1;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = small_config();
  j["trap"] = nlohmann::json::object();
  j["bias"] = nlohmann::json::object();
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
}

TEST_CASE("command line exit codes") {
  testing::TempDir dir("pipeline_cli");
  testing::spit(dir / "good.json", small_config().dump());
  testing::spit(dir / "bad.json", R"({"experiment_id": "x", "colour": 1})");

  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("run --config " + (dir / "missing.json").string() + " --out " + (dir / "o").string()) == 1);
  CHECK(run_cli("run --config " + (dir / "bad.json").string() + " --out " + (dir / "o").string()) == 1);
  CHECK(run_cli("analyze --results " + (dir / "absent.csv").string() + " --out " + (dir / "o").string()) == 2);
  CHECK(run_cli("synth --config " + (dir / "good.json").string() + " --out " + (dir / "synth").string()) == 0);
  CHECK(fs::exists(dir / "synth" / "manifest.csv"));
  CHECK(run_cli("run --config " + (dir / "good.json").string() + " --out " + (dir / "run").string()) == 0);
  CHECK(fs::exists(dir / "run" / "report.svg"));

  const auto results = (dir / "run" / "results.csv").string();
  CHECK(run_cli("analyze --results " + results + " --exclude 0.5 --resamples 20 --out " + (dir / "an").string()) == 0);
  CHECK(testing::slurp(dir / "an" / "coefficients.csv") == testing::slurp(dir / "run" / "coefficients.csv"));
  CHECK(run_cli("report --results " + results + " --coefficients " + (dir / "an" / "coefficients.csv").string() +
                " --out " + (dir / "r.svg").string()) == 0);
  CHECK(fs::exists(dir / "r.svg"));
}
