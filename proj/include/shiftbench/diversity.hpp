#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shiftbench/manifest.hpp"

namespace shiftbench {

struct BinaryTaskSpec {
  std::string superclass_a;
  std::string superclass_b;
  std::array<std::vector<std::string>, 2> train_subclasses;
  std::array<std::vector<std::string>, 2> shifted_subclasses;
  std::uint64_t seed = 0;

  void validate(int min_train = 3, int min_shift = 2) const;  // throws ConfigError
  bool operator==(const BinaryTaskSpec&) const = default;
};

nlohmann::ordered_json to_json(const BinaryTaskSpec& task);
BinaryTaskSpec task_from_json(const nlohmann::json& j);

// Per class, a seeded uniform choice of n_train subclasses for training and
// n_shift disjoint subclasses held out as the diversity shift.
BinaryTaskSpec build_superclass_tasks(const DatasetManifest& manifest, std::uint64_t seed,
                                      int n_train_sub = 3, int n_shift_sub = 2);

struct DiversitySplit {
  DatasetManifest train;
  DatasetManifest val;
  DatasetManifest iid_test;
  DatasetManifest shifted_test;
};

// Train-subclass samples are split per class into train/val/iid_test by the
// given fractions (round-half-up counts, remainder to iid_test); every sample
// of a shifted subclass goes to shifted_test.
DiversitySplit split_diversity(const DatasetManifest& manifest, const BinaryTaskSpec& task,
                               double train_frac, double val_frac);

// Class-stratified down-sampling of every manifest to a common size: the
// smallest record count, or `target_size` when given.
std::vector<DatasetManifest> equalize_test_sizes(const std::vector<DatasetManifest>& tests,
                                                 std::optional<std::size_t> target_size,
                                                 std::uint64_t seed);

}  // namespace shiftbench
