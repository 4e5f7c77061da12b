#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shiftbench/color.hpp"
#include "shiftbench/image.hpp"
#include "shiftbench/manifest.hpp"

namespace shiftbench {

struct BiasSpec {
  double training_bias_percent = 50.0;
  std::array<NamedColor, 2> class_colors{NamedColor{"blue", {0, 0, 255}},
                                         NamedColor{"red", {255, 0, 0}}};
  std::optional<std::array<NamedColor, 2>> unseen_colors =
      std::array<NamedColor, 2>{NamedColor{"green", {0, 255, 0}},
                                NamedColor{"magenta", {255, 0, 255}}};
  double square_area_fraction = 0.08;
  double hue_jitter_degrees = 10.0;
  int border_margin_px = 0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

enum class Scenario { SameSame, SameDiff, NoShortcuts, Diff };
enum class SameDiffMode { Reversed, Random };

inline constexpr std::array<Scenario, 4> kAllScenarios = {Scenario::SameSame, Scenario::SameDiff,
                                                          Scenario::NoShortcuts, Scenario::Diff};

std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view s);
std::string_view to_string(SameDiffMode m);
SameDiffMode parse_same_diff_mode(std::string_view s);

struct ScenarioKind {
  Scenario kind = Scenario::SameSame;
  SameDiffMode same_diff_mode = SameDiffMode::Reversed;
};

struct ColorAssignment {
  std::map<std::string, std::string> colors;  // sample_id -> color name
  std::array<std::size_t, 2> majority_counts{0, 0};
  std::array<std::size_t, 2> minority_counts{0, 0};
};

// round-half-up(bias_percent / 100 * n)
std::size_t majority_count(double bias_percent, std::size_t n);

// Side length of the injected square: round(sqrt(fraction * H * W)).
int square_side(double area_fraction, int height, int width);

ColorAssignment assign_colors(const DatasetManifest& manifest, const BiasSpec& spec);

RgbImage inject_square(const RgbImage& image, Rgb color, const BiasSpec& spec,
                       std::uint64_t sample_seed);

std::uint64_t sample_seed(const BiasSpec& spec, std::string_view sample_id);

// Images held in memory, aligned index-for-index with manifest.records.
struct MaterializedSet {
  DatasetManifest manifest;
  std::vector<RgbImage> images;
};

using ImageLoader = std::function<RgbImage(const DatasetManifest&, const SampleRecord&)>;
RgbImage load_from_disk(const DatasetManifest& m, const SampleRecord& r);

// Injects every record of `subset` per assign_colors(subset, spec).
MaterializedSet inject_biased(const DatasetManifest& subset, const BiasSpec& spec,
                              const ImageLoader& load = load_from_disk);

struct TrainingSplit {
  MaterializedSet train;
  MaterializedSet val;
};

// Train and val records (by split_tag) each receive an independent
// exact-count assignment at the same bias.
TrainingSplit build_training_split(const DatasetManifest& manifest, const BiasSpec& spec,
                                   const ImageLoader& load = load_from_disk);

MaterializedSet build_test_scenario(const DatasetManifest& manifest, ScenarioKind scenario,
                                    const BiasSpec& spec, const ImageLoader& load = load_from_disk);

// Writes one PNG per record into image_dir and the manifest to
// manifest_path, with image paths relative to the manifest's directory.
DatasetManifest write_materialized(const MaterializedSet& set, const std::filesystem::path& manifest_path,
                                   const std::filesystem::path& image_dir);

}  // namespace shiftbench
