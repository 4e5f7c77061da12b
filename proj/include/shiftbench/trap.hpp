#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "shiftbench/manifest.hpp"

namespace shiftbench {

// Train/test partition over the eligible samples of a manifest. The trap
// objective used here is a reconstruction: the L1 gap between train and
// test artifact prevalence, conditioned on each label, summed over artifacts.
struct TrapSplit {
  std::vector<std::string> train_ids;  // sorted
  std::vector<std::string> test_ids;   // sorted
  double objective_value = 0.0;
  double lambda = 0.0;  // 0 = random split, 1 = full trap split

  bool operator==(const TrapSplit&) const = default;
};

nlohmann::ordered_json to_json(const TrapSplit& split);
TrapSplit trap_split_from_json(const nlohmann::json& j);

// Per-class test counts: round-half-up(test_fraction * N_c); each class must
// keep at least one sample on both sides.
std::array<std::size_t, 2> trap_test_counts(const DatasetManifest& manifest, double test_fraction);

double trap_objective(const TrapSplit& split, const DatasetManifest& manifest);

TrapSplit random_trap_split(const DatasetManifest& manifest, double test_fraction, std::uint64_t seed);

struct AnnealSettings {
  int iterations = 20000;
  int restarts = 4;
  int jobs = 1;
  double final_temperature_ratio = 1e-3;
};

struct AnnealReport {
  TrapSplit best;
  // Best-so-far objective after each iteration of the winning restart.
  std::vector<double> best_trace;
  int winning_restart = 0;
};

// Simulated annealing over same-label train/test swaps with geometric
// cooling. Iteration 1 evaluates the seeded random start; each further
// iteration proposes one swap.
AnnealReport anneal_trap_split(const DatasetManifest& manifest, double test_fraction,
                               const AnnealSettings& settings, std::uint64_t seed);

TrapSplit optimize_trap_split(const DatasetManifest& manifest, double test_fraction, int iterations,
                              std::uint64_t seed);

// Exhaustive search over all splits with the per-class test counts; limited
// to 12 eligible samples.
TrapSplit brute_force_trap_split(const DatasetManifest& manifest, double test_fraction);

// Moves round-half-up(lambda * |D| / 2) same-label pairs from the random
// split's side to the trap split's side, where D is the disagreement set.
TrapSplit interpolate_split(const TrapSplit& random_split, const TrapSplit& trap_split, double lambda,
                            const DatasetManifest& manifest, std::uint64_t seed);

// Tags train ids as Train and test ids as Test; other records are dropped.
DatasetManifest stamp_split(const DatasetManifest& manifest, const TrapSplit& split);

}  // namespace shiftbench
