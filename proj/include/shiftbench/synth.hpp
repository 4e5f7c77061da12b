#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shiftbench/image.hpp"
#include "shiftbench/manifest.hpp"

namespace shiftbench {

// Acquisition-style artifact painted onto a random subset of samples,
// independent of the label. Supported names: "dark_corners", "ruler".
struct SynthArtifact {
  std::string name;
  double prevalence = 0.3;
};

struct SynthSpec {
  int samples_per_class = 100;
  int image_size = 64;
  int subclasses_per_class = 5;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  std::vector<SynthArtifact> artifacts;

  void validate() const;  // throws ConfigError
};

// Subclass tag for subclass `index` of class `label` ("disk_0", "stripes_3", ...).
std::string synth_subclass_name(int label, int index);

// Draws the image for one (class, subclass, within-subclass index) cell.
// Class 0 is a filled disk placed around a subclass-specific anchor; class 1
// is a field of parallel stripes whose angle lies in a subclass-specific band.
RgbImage render_synthetic(const SynthSpec& spec, int label, int subclass, int index,
                          const std::vector<bool>& artifact_on);

// Writes images under out_dir/images and the manifest to out_dir/manifest.csv.
DatasetManifest generate_synthetic_dataset(const SynthSpec& spec,
                                           const std::filesystem::path& out_dir, int jobs = 1);

}  // namespace shiftbench
