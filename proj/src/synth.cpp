#include "shiftbench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "shiftbench/errors.hpp"
#include "shiftbench/parallel.hpp"
#include "shiftbench/rng.hpp"
#include "shiftbench/stable_hash.hpp"

namespace shiftbench {

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::string sample_name(int label, int subclass, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05d", synth_subclass_name(label, subclass).c_str(), index);
  return buf;
}

void paint_dark_corners(std::vector<double>& lum, int size) {
  const double c = (size - 1) / 2.0;
  const double half_diag = std::sqrt(2.0) * c;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double d = std::hypot(x - c, y - c) / half_diag;
      if (d > 0.82) lum[static_cast<std::size_t>(y * size + x)] *= 0.2;
    }
}

void paint_ruler(std::vector<double>& lum, int size) {
  const int y0 = size - 1 - std::max(1, size / 16);
  const int len = size / 2;
  for (int x = 1; x < 1 + len && x < size; ++x) {
    lum[static_cast<std::size_t>(y0 * size + x)] = 15.0;
    if (x % std::max(2, size / 16) == 0)
      for (int t = 1; t <= std::max(1, size / 20); ++t)
        lum[static_cast<std::size_t>((y0 - t) * size + x)] = 15.0;
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (samples_per_class <= 0) throw ConfigError("samples_per_class must be positive");
  if (image_size < 8) throw ConfigError("image_size must be at least 8");
  if (subclasses_per_class <= 0) throw ConfigError("subclasses_per_class must be positive");
  if (samples_per_class % subclasses_per_class != 0)
    throw ConfigError("samples_per_class (" + std::to_string(samples_per_class) +
                      ") not divisible by subclasses_per_class (" +
                      std::to_string(subclasses_per_class) + ")");
  if (!(noise_level >= 0.0 && noise_level <= 1.0)) throw ConfigError("noise_level must be in [0,1]");
  for (const auto& a : artifacts) {
    if (a.name != "dark_corners" && a.name != "ruler")
      throw ConfigError("unknown synthetic artifact '" + a.name + "'");
    if (!(a.prevalence >= 0.0 && a.prevalence <= 1.0))
      throw ConfigError("artifact prevalence must be in [0,1]");
  }
}

std::string synth_subclass_name(int label, int index) {
  return (label == 0 ? "disk_" : "stripes_") + std::to_string(index);
}

RgbImage render_synthetic(const SynthSpec& spec, int label, int subclass, int index,
                          const std::vector<bool>& artifact_on) {
  const int n = spec.image_size;
  Rng rng(stable_hash(spec.seed, "synth", label, subclass, index));

  const double background = rng.uniform(80.0, 120.0);
  const double foreground = background + rng.uniform(40.0, 80.0);
  const double offset = spec.noise_level * rng.uniform(-60.0, 60.0);
  const double sigma = spec.noise_level * 255.0;

  std::vector<double> lum(static_cast<std::size_t>(n * n), background);
  const double half = n / 2.0;
  if (label == 0) {
    const double theta = 2.0 * std::numbers::pi * subclass / spec.subclasses_per_class;
    const double cx = half + 0.24 * n * std::cos(theta) + rng.uniform(-0.06, 0.06) * n;
    const double cy = half + 0.24 * n * std::sin(theta) + rng.uniform(-0.06, 0.06) * n;
    const double radius = rng.uniform(0.14, 0.20) * n;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= radius)
          lum[static_cast<std::size_t>(y * n + x)] = foreground;
  } else {
    const double band = std::numbers::pi / spec.subclasses_per_class;
    const double angle = band * (subclass + rng.uniform());
    const double period = rng.uniform(0.15, 0.25) * n;
    const double phase = rng.uniform(0.0, period);
    const double ux = std::cos(angle), uy = std::sin(angle);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double t = (x + 0.5) * ux + (y + 0.5) * uy + phase;
        const double frac = t / period - std::floor(t / period);
        if (frac < 0.5) lum[static_cast<std::size_t>(y * n + x)] = foreground;
      }
  }

  for (std::size_t a = 0; a < spec.artifacts.size(); ++a) {
    if (!artifact_on[a]) continue;
    if (spec.artifacts[a].name == "dark_corners") paint_dark_corners(lum, n);
    else paint_ruler(lum, n);
  }

  RgbImage img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double v = lum[static_cast<std::size_t>(y * n + x)] + offset;
      Rgb px;
      for (auto& ch : px) ch = to_byte(v + (sigma > 0.0 ? sigma * rng.normal() : 0.0));
      img.set(x, y, px);
    }
  return img;
}

DatasetManifest generate_synthetic_dataset(const SynthSpec& spec,
                                           const std::filesystem::path& out_dir, int jobs) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  const int per_sub = spec.samples_per_class / spec.subclasses_per_class;
  DatasetManifest m;
  m.root = out_dir;
  m.class_names = {"disk", "stripes"};
  for (const auto& a : spec.artifacts) m.artifact_names.push_back(a.name);
  m.provenance.description = "synthetic disk-vs-stripes dataset";
  m.provenance.seed = spec.seed;

  struct Cell {
    int label, subclass, index;
  };
  std::vector<Cell> cells;
  for (int label = 0; label < 2; ++label)
    for (int s = 0; s < spec.subclasses_per_class; ++s)
      for (int k = 0; k < per_sub; ++k) cells.push_back({label, s, k});

  m.records.resize(cells.size());
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    const auto& c = cells[i];
    SampleRecord r;
    r.sample_id = sample_name(c.label, c.subclass, c.index);
    r.label = c.label;
    r.subclass = synth_subclass_name(c.label, c.subclass);
    r.image_path = "images/" + r.subclass + "/" + r.sample_id + ".png";
    std::vector<bool> on;
    for (const auto& a : spec.artifacts) {
      Rng arng(stable_hash(spec.seed, "artifact", r.sample_id, a.name));
      on.push_back(arng.uniform() < a.prevalence);
      r.artifact_flags[a.name] = on.back();
    }
    write_png(out_dir / r.image_path, render_synthetic(spec, c.label, c.subclass, c.index, on));
    m.records[i] = std::move(r);
  });
  m.normalize();
  save_manifest(m, out_dir / "manifest.csv");
  return m;
}

}  // namespace shiftbench
