#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shiftbench/image.hpp"
#include "shiftbench/injector.hpp"
#include "shiftbench/manifest.hpp"

namespace shiftbench {

// Area-average resampling matrix mapping `source` samples onto `target`
// equal-width bins; each row sums to one.
Eigen::MatrixXd area_resampler(int source, int target);

// Downsamples to side x side by area averaging, scales channels to [0,1] and
// flattens row-major with interleaved channels: index (y*side + x)*3 + c.
Eigen::VectorXd featurize(const RgbImage& image, int input_side);

// Labelled feature matrix; one column per sample.
struct FeatureSet {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> ids;

  Eigen::Index size() const { return X.cols(); }
};

FeatureSet featurize_set(const MaterializedSet& set, int input_side, int jobs = 1);
FeatureSet featurize_manifest(const DatasetManifest& manifest, int input_side,
                              const ImageLoader& load = load_from_disk, int jobs = 1);

}  // namespace shiftbench
