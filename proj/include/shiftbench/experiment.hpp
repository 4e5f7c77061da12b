#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "shiftbench/analyzer.hpp"
#include "shiftbench/config.hpp"

namespace shiftbench {

struct GridCell {
  Scenario scenario = Scenario::SameSame;
  std::string shift_set;
  bool available = true;
  bool completed = false;
};

struct ScenarioGridResult {
  std::vector<GridCell> cells;
  std::vector<RunRecord> records;  // canonical order

  const GridCell* find(Scenario s, const std::string& shift_set) const;
};

struct RunOptions {
  int jobs = 1;
  bool resume = false;
  // Progress messages; silent when empty.
  std::function<void(const std::string&)> log;
};

// Output layout under `out_dir`:
//   data/            synthetic source dataset (synthetic data source only)
//   manifests/       pools, test cells, task/trap JSON, per-run training manifests
//   images/          materialized test-cell images
//   models/          one model file per (bias, replica)
//   runs/            per-(bias, replica) result fragments, used for resuming
//   results.csv, coefficients.csv, attenuation.csv, confidence.csv,
//   aggregates.csv, coefficients.txt, grid.json, report.svg, config.json
ScenarioGridResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                  const RunOptions& options = {});

// seed for one (bias, replica) run
std::uint64_t run_seed(std::uint64_t base_seed, double bias, int replica);

}  // namespace shiftbench
