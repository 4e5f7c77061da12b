#include "shiftbench/features.hpp"

#include <algorithm>

#include "shiftbench/errors.hpp"
#include "shiftbench/parallel.hpp"

namespace shiftbench {

Eigen::MatrixXd area_resampler(int source, int target) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(target, source);
  const double scale = static_cast<double>(source) / target;
  for (int o = 0; o < target; ++o) {
    const double lo = o * scale, hi = (o + 1) * scale;
    for (int s = static_cast<int>(lo); s < source && s < hi; ++s) {
      const double overlap = std::min<double>(s + 1, hi) - std::max<double>(s, lo);
      if (overlap > 0.0) r(o, s) = overlap / scale;
    }
  }
  return r;
}

Eigen::VectorXd featurize(const RgbImage& image, int input_side) {
  if (image.empty()) throw DataError("cannot featurize an empty image");
  if (input_side < 1 || input_side > std::min(image.width(), image.height()))
    throw ConfigError("input_side must be in [1, image side]");
  const int h = image.height(), w = image.width();
  const Eigen::MatrixXd ry = area_resampler(h, input_side);
  const Eigen::MatrixXd rx = area_resampler(w, input_side);
  const auto& bytes = image.bytes();

  Eigen::VectorXd out(3 * input_side * input_side);
  Eigen::MatrixXd channel(h, w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        channel(y, x) = bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c];
    const Eigen::MatrixXd small = ry * channel * rx.transpose();
    for (int y = 0; y < input_side; ++y)
      for (int x = 0; x < input_side; ++x) out((y * input_side + x) * 3 + c) = small(y, x) / 255.0;
  }
  return out;
}

FeatureSet featurize_set(const MaterializedSet& set, int input_side, int jobs) {
  const auto n = set.manifest.records.size();
  FeatureSet fs;
  fs.X.resize(3 * input_side * input_side, static_cast<Eigen::Index>(n));
  fs.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    fs.ids.push_back(set.manifest.records[i].sample_id);
    fs.y(static_cast<Eigen::Index>(i)) = set.manifest.records[i].label;
  }
  parallel_for(n, jobs, [&](std::size_t i) {
    fs.X.col(static_cast<Eigen::Index>(i)) = featurize(set.images[i], input_side);
  });
  return fs;
}

FeatureSet featurize_manifest(const DatasetManifest& manifest, int input_side,
                              const ImageLoader& load, int jobs) {
  const auto n = manifest.records.size();
  FeatureSet fs;
  fs.X.resize(3 * input_side * input_side, static_cast<Eigen::Index>(n));
  fs.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    fs.ids.push_back(manifest.records[i].sample_id);
    fs.y(static_cast<Eigen::Index>(i)) = manifest.records[i].label;
  }
  parallel_for(n, jobs, [&](std::size_t i) {
    fs.X.col(static_cast<Eigen::Index>(i)) = featurize(load(manifest, manifest.records[i]), input_side);
  });
  return fs;
}

}  // namespace shiftbench
