#include "shiftbench/injector.hpp"

#include <cmath>
#include <set>

#include "shiftbench/errors.hpp"
#include "shiftbench/rng.hpp"
#include "shiftbench/stable_hash.hpp"

namespace shiftbench {

void BiasSpec::validate() const {
  if (!(training_bias_percent >= 50.0 && training_bias_percent <= 100.0))
    throw ConfigError("training_bias_percent must be in [50,100]");
  if (!(square_area_fraction > 0.0 && square_area_fraction <= 0.25))
    throw ConfigError("square_area_fraction must be in (0, 0.25]");
  if (!(hue_jitter_degrees >= 0.0)) throw ConfigError("hue_jitter_degrees must be >= 0");
  if (border_margin_px < 0) throw ConfigError("border_margin_px must be >= 0");
  std::vector<NamedColor> all(class_colors.begin(), class_colors.end());
  if (unseen_colors) all.insert(all.end(), unseen_colors->begin(), unseen_colors->end());
  std::set<Rgb> rgbs;
  std::set<std::string> names;
  for (const auto& c : all) {
    if (c.name.empty() || c.name == "none") throw ConfigError("invalid color name '" + c.name + "'");
    if (!rgbs.insert(c.rgb).second) throw ConfigError("bias colors must be pairwise distinct");
    if (!names.insert(c.name).second) throw ConfigError("duplicate color name '" + c.name + "'");
  }
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::SameSame: return "same_same";
    case Scenario::SameDiff: return "same_diff";
    case Scenario::NoShortcuts: return "no_shortcuts";
    case Scenario::Diff: return "diff";
  }
  return "same_same";
}

Scenario parse_scenario(std::string_view s) {
  for (auto k : kAllScenarios)
    if (to_string(k) == s) return k;
  throw DataError("unknown scenario '" + std::string(s) + "'");
}

std::string_view to_string(SameDiffMode m) {
  return m == SameDiffMode::Reversed ? "reversed" : "random";
}

SameDiffMode parse_same_diff_mode(std::string_view s) {
  if (s == "reversed") return SameDiffMode::Reversed;
  if (s == "random") return SameDiffMode::Random;
  throw ConfigError("unknown same_diff mode '" + std::string(s) + "'");
}

std::size_t majority_count(double bias_percent, std::size_t n) {
  if (bias_percent == std::floor(bias_percent)) {
    const auto b = static_cast<unsigned long long>(bias_percent);
    return static_cast<std::size_t>((b * n + 50) / 100);
  }
  return static_cast<std::size_t>(std::floor(static_cast<long double>(bias_percent) * n / 100.0L + 0.5L));
}

int square_side(double area_fraction, int height, int width) {
  return static_cast<int>(std::lround(std::sqrt(area_fraction * height * width)));
}

ColorAssignment assign_colors(const DatasetManifest& manifest, const BiasSpec& spec) {
  spec.validate();
  ColorAssignment out;
  for (int c = 0; c < 2; ++c) {
    std::vector<const SampleRecord*> members;
    for (const auto& r : manifest.records)
      if (r.label == c) members.push_back(&r);
    if (members.empty())
      throw DataError("class " + std::to_string(c) + " has zero samples");
    Rng rng(stable_hash(spec.seed, "assign", c));
    rng.shuffle(std::span(members));
    const std::size_t k = majority_count(spec.training_bias_percent, members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      const int color_class = i < k ? c : 1 - c;
      out.colors[members[i]->sample_id] = spec.class_colors[static_cast<std::size_t>(color_class)].name;
    }
    out.majority_counts[static_cast<std::size_t>(c)] = k;
    out.minority_counts[static_cast<std::size_t>(c)] = members.size() - k;
  }
  return out;
}

std::uint64_t sample_seed(const BiasSpec& spec, std::string_view sample_id) {
  return stable_hash(spec.seed, "square", sample_id);
}

RgbImage inject_square(const RgbImage& image, Rgb color, const BiasSpec& spec,
                       std::uint64_t seed) {
  const int h = image.height(), w = image.width();
  if (h < 8 || w < 8) throw DataError("image smaller than 8x8");
  const int s = square_side(spec.square_area_fraction, h, w);
  if (s > std::min(h, w) || s < 1) throw DataError("square side exceeds image size");
  const int m = spec.border_margin_px;

  // Top-left corners whose square has an edge within m pixels of the frame.
  auto valid = [&](int x, int y) { return x <= m || y <= m || x + s >= w - m || y + s >= h - m; };
  std::uint64_t total = 0;
  for (int y = 0; y <= h - s; ++y)
    for (int x = 0; x <= w - s; ++x) total += valid(x, y);

  Rng rng(seed);
  std::uint64_t pick = rng.below(total);
  int px = 0, py = 0;
  for (int y = 0; y <= h - s; ++y)
    for (int x = 0; x <= w - s; ++x)
      if (valid(x, y) && pick-- == 0) {
        px = x;
        py = y;
        y = h;
        break;
      }

  const double delta = spec.hue_jitter_degrees > 0.0
                           ? rng.uniform(-spec.hue_jitter_degrees, spec.hue_jitter_degrees)
                           : 0.0;
  const Rgb fill = rotate_hue(color, delta);

  RgbImage out = image;
  for (int y = py; y < py + s; ++y)
    for (int x = px; x < px + s; ++x) out.set(x, y, fill);
  return out;
}

RgbImage load_from_disk(const DatasetManifest& m, const SampleRecord& r) {
  return read_png(m.image_file(r));
}

namespace {

Rgb color_by_name(const BiasSpec& spec, const std::string& name) {
  for (const auto& c : spec.class_colors)
    if (c.name == name) return c.rgb;
  if (spec.unseen_colors)
    for (const auto& c : *spec.unseen_colors)
      if (c.name == name) return c.rgb;
  throw ConfigError("unknown color '" + name + "'");
}

}  // namespace

MaterializedSet inject_biased(const DatasetManifest& subset, const BiasSpec& spec,
                              const ImageLoader& load) {
  const auto assignment = assign_colors(subset, spec);
  MaterializedSet out{subset, {}};
  out.images.reserve(subset.records.size());
  for (auto& r : out.manifest.records) {
    const auto& name = assignment.colors.at(r.sample_id);
    out.images.push_back(inject_square(load(subset, r), color_by_name(spec, name), spec,
                                       sample_seed(spec, r.sample_id)));
    r.injected_color = name;
  }
  return out;
}

TrainingSplit build_training_split(const DatasetManifest& manifest, const BiasSpec& spec,
                                   const ImageLoader& load) {
  const auto train = manifest.filter([](const SampleRecord& r) { return r.split_tag == SplitTag::Train; });
  const auto val = manifest.filter([](const SampleRecord& r) { return r.split_tag == SplitTag::Val; });
  if (train.records.empty()) throw DataError("no records tagged train");
  if (val.records.empty()) throw DataError("no records tagged val");
  BiasSpec val_spec = spec;
  val_spec.seed = stable_hash(spec.seed, "val");
  return {inject_biased(train, spec, load), inject_biased(val, val_spec, load)};
}

MaterializedSet build_test_scenario(const DatasetManifest& manifest, ScenarioKind scenario,
                                    const BiasSpec& spec, const ImageLoader& load) {
  spec.validate();
  if (scenario.kind == Scenario::Diff && !spec.unseen_colors)
    throw ConfigError("diff scenario requires unseen colors");
  MaterializedSet out{manifest.filter([](const SampleRecord& r) { return r.split_tag == SplitTag::Test; }), {}};
  if (out.manifest.records.empty()) throw DataError("no records tagged test");
  out.images.reserve(out.manifest.records.size());
  for (auto& r : out.manifest.records) {
    RgbImage src = load(manifest, r);
    const auto own = static_cast<std::size_t>(r.label);
    const NamedColor* color = nullptr;
    switch (scenario.kind) {
      case Scenario::SameSame: color = &spec.class_colors[own]; break;
      case Scenario::SameDiff:
        if (scenario.same_diff_mode == SameDiffMode::Reversed) {
          color = &spec.class_colors[1 - own];
        } else {
          Rng rng(stable_hash(spec.seed, "random_color", r.sample_id));
          color = &spec.class_colors[rng.below(2)];
        }
        break;
      case Scenario::NoShortcuts: break;
      case Scenario::Diff: color = &(*spec.unseen_colors)[own]; break;
    }
    if (color) {
      out.images.push_back(inject_square(src, color->rgb, spec, sample_seed(spec, r.sample_id)));
      r.injected_color = color->name;
    } else {
      out.images.push_back(std::move(src));
      r.injected_color.reset();
    }
  }
  return out;
}

DatasetManifest write_materialized(const MaterializedSet& set, const std::filesystem::path& manifest_path,
                                   const std::filesystem::path& image_dir) {
  DatasetManifest m = set.manifest;
  m.root = manifest_path.parent_path();
  const auto rel_dir = image_dir.lexically_relative(m.root);
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    auto& r = m.records[i];
    r.image_path = (rel_dir / (r.sample_id + ".png")).generic_string();
    write_png(m.root / r.image_path, set.images[i]);
  }
  save_manifest(m, manifest_path);
  return m;
}

}  // namespace shiftbench
