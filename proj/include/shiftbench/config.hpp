#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shiftbench/injector.hpp"
#include "shiftbench/model.hpp"
#include "shiftbench/synth.hpp"
#include "shiftbench/trap.hpp"

namespace shiftbench {

struct DiversityConfig {
  int n_train_sub = 3;
  int n_shift_sub = 2;
};

// Extra diversity-shifted test pool supplied as a manifest (e.g. images
// from another acquisition site).
struct ExternalTestSet {
  std::string shift_set;
  std::filesystem::path manifest;
};

struct TrapConfig {
  double test_fraction = 0.3;
  double val_fraction = 0.2;
  AnnealSettings anneal;
};

struct ExperimentConfig {
  std::string experiment_id = "experiment";
  std::optional<SynthSpec> synthetic;
  std::optional<std::filesystem::path> manifest_path;

  // Training bias in percent (square mode) or lambda in [0,1] (trap mode).
  std::vector<double> bias_sweep{52, 56, 60, 64, 68, 72, 76, 80};
  // Evaluated like the sweep but excluded from the regression fits.
  std::vector<double> control_biases;
  int replicas = 10;

  ModelSpec model;
  BiasSpec bias;
  SameDiffMode same_diff_mode = SameDiffMode::Reversed;

  // Per-class fractions used to carve train / val / in-distribution test.
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::optional<std::size_t> test_size;  // per test pool, after equalization

  std::optional<DiversityConfig> diversity;
  std::vector<ExternalTestSet> external_tests;
  std::optional<TrapConfig> trap;

  std::vector<std::string> metrics{"auc", "balanced_accuracy"};
  std::uint64_t base_seed = 0;
  int bootstrap_resamples = 1000;
  bool materialize_training_images = false;

  bool trap_mode() const { return trap.has_value(); }
  // Normalized [0,1] axis value recorded for a sweep entry.
  double normalized_bias(double sweep_value) const {
    return trap_mode() ? sweep_value : sweep_value / 100.0;
  }

  void validate() const;  // throws ConfigError
};

// Relative paths inside the document resolve against `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ExperimentConfig& c);

nlohmann::ordered_json to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const nlohmann::json& j, const SynthSpec& defaults = {});
nlohmann::ordered_json to_json(const BiasSpec& b);
BiasSpec bias_spec_from_json(const nlohmann::json& j, const BiasSpec& defaults = {});

}  // namespace shiftbench
