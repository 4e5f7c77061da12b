#include <catch_amalgamated.hpp>

#include <cmath>

#include "shiftbench/errors.hpp"
#include "shiftbench/injector.hpp"
#include "shiftbench/stable_hash.hpp"
#include "support.hpp"

using namespace shiftbench;

namespace {

DatasetManifest balanced(std::size_t per_class, SplitTag tag = SplitTag::Unassigned) {
  DatasetManifest m;
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < per_class; ++i)
      m.records.push_back(testing::record("c" + std::to_string(c) + "_" + std::to_string(i), c, "", tag));
  m.normalize();
  return m;
}

// Deterministic textured image per sample so that non-occlusion is meaningful.
RgbImage texture(const SampleRecord& r, int side = 32) {
  RgbImage img(side, side);
  const auto h = stable_hash(r.sample_id);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      img.set(x, y, {static_cast<std::uint8_t>((x * 7 + h) % 200), static_cast<std::uint8_t>((y * 5 + (h >> 8)) % 200),
                     static_cast<std::uint8_t>((x + y + (h >> 16)) % 200)});
  return img;
}

const ImageLoader kTexture = [](const DatasetManifest&, const SampleRecord& r) { return texture(r); };

std::map<std::string, std::array<int, 2>> color_counts(const DatasetManifest& m) {
  std::map<std::string, std::array<int, 2>> out;
  for (const auto& r : m.records) out[r.injected_color.value_or("none")][static_cast<std::size_t>(r.label)]++;
  return out;
}

struct Square {
  int x0, y0, x1, y1;  // inclusive bounds of changed pixels
  int changed;
};

Square diff_box(const RgbImage& a, const RgbImage& b) {
  Square s{a.width(), a.height(), -1, -1, 0};
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      if (a.rgb(x, y) != b.rgb(x, y)) {
        s.x0 = std::min(s.x0, x);
        s.y0 = std::min(s.y0, y);
        s.x1 = std::max(s.x1, x);
        s.y1 = std::max(s.y1, y);
        ++s.changed;
      }
  return s;
}

}  // namespace

TEST_CASE("majority count follows round-half-up") {
  CHECK(majority_count(70, 100) == 70);
  CHECK(majority_count(50, 100) == 50);
  CHECK(majority_count(100, 10) == 10);
  CHECK(majority_count(70, 97) == 68);
  CHECK(majority_count(52, 100) == 52);
  CHECK(majority_count(50, 97) == 49);  // 48.5 rounds up
  CHECK(majority_count(50, 1) == 1);
}

TEST_CASE("exact-count property over the full bias grid") {
  for (int b = 50; b <= 100; b += 2)
    for (std::size_t n : {10u, 97u, 100u, 2400u}) {
      const auto expected = static_cast<std::size_t>(std::floor(b * static_cast<double>(n) / 100.0 + 0.5));
      REQUIRE(majority_count(b, n) == expected);
    }
}

TEST_CASE("assign_colors examples") {
  BiasSpec spec;
  spec.seed = 4;
  SECTION("b=70, N=100") {
    spec.training_bias_percent = 70;
    const auto a = assign_colors(balanced(100), spec);
    CHECK(a.majority_counts == std::array<std::size_t, 2>{70, 70});
    CHECK(a.minority_counts == std::array<std::size_t, 2>{30, 30});
    std::map<std::string, int> blue_in_a;
    for (const auto& [id, color] : a.colors)
      if (id.starts_with("c0")) blue_in_a[color]++;
    CHECK(blue_in_a["blue"] == 70);
    CHECK(blue_in_a["red"] == 30);
  }
  SECTION("b=50") {
    spec.training_bias_percent = 50;
    CHECK(assign_colors(balanced(100), spec).majority_counts == std::array<std::size_t, 2>{50, 50});
  }
  SECTION("b=100, N=10") {
    spec.training_bias_percent = 100;
    const auto a = assign_colors(balanced(10), spec);
    CHECK(a.majority_counts == std::array<std::size_t, 2>{10, 10});
    CHECK(a.minority_counts == std::array<std::size_t, 2>{0, 0});
  }
  SECTION("b=70, N=97") {
    spec.training_bias_percent = 70;
    const auto a = assign_colors(balanced(97), spec);
    CHECK(a.majority_counts == std::array<std::size_t, 2>{68, 68});
    CHECK(a.minority_counts == std::array<std::size_t, 2>{29, 29});
  }
  SECTION("every sample is colored and the choice is seeded") {
    spec.training_bias_percent = 60;
    const auto a = assign_colors(balanced(40), spec);
    CHECK(a.colors.size() == 80);
    CHECK(assign_colors(balanced(40), spec).colors == a.colors);
    spec.seed = 5;
    CHECK(assign_colors(balanced(40), spec).colors != a.colors);
  }
  SECTION("empty class") {
    DatasetManifest m;
    m.records.push_back(testing::record("only", 0));
    CHECK_THROWS_AS(assign_colors(m, spec), DataError);
  }
}

TEST_CASE("bias spec validation") {
  BiasSpec spec;
  spec.training_bias_percent = 49;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.training_bias_percent = 60;
  spec.square_area_fraction = 0.3;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.square_area_fraction = 0.08;
  spec.unseen_colors = std::array<NamedColor, 2>{NamedColor{"green", {0, 255, 0}}, NamedColor{"navy", {0, 0, 255}}};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("square geometry") {
  CHECK(square_side(0.08, 224, 224) == 63);
  CHECK(square_side(0.08, 64, 64) == 18);
  BiasSpec spec;
  spec.hue_jitter_degrees = 0;
  RgbImage tiny(6, 6);
  CHECK_THROWS_AS(inject_square(tiny, {255, 0, 0}, spec, 1), DataError);
}

TEST_CASE("inject_square properties") {
  BiasSpec spec;
  for (int margin : {0, 3})
    for (double jitter : {0.0, 10.0})
      for (std::uint64_t seed = 0; seed < 200; ++seed) {
        spec.border_margin_px = margin;
        spec.hue_jitter_degrees = jitter;
        const auto src = texture(testing::record("x" + std::to_string(seed), 0), 40);
        const Rgb color{0, 0, 255};
        const auto out = inject_square(src, color, spec, seed);
        REQUIRE(out == inject_square(src, color, spec, seed));

        const int s = square_side(spec.square_area_fraction, 40, 40);
        const auto box = diff_box(src, out);
        REQUIRE(box.changed > 0);
        REQUIRE(box.x1 - box.x0 + 1 <= s);
        REQUIRE(box.y1 - box.y0 + 1 <= s);
        REQUIRE(box.changed <= s * s);
        REQUIRE(box.changed >= s * s - s);
        // A square pixel can coincide with the texture, so the changed box may
        // be smaller than s; it still has to sit in the border band.
        const bool near_edge = box.x0 <= margin || box.y0 <= margin || box.x1 + 1 >= 40 - margin ||
                               box.y1 + 1 >= 40 - margin || box.x1 - box.x0 + 1 < s || box.y1 - box.y0 + 1 < s;
        REQUIRE(near_edge);
        if (jitter == 0) {
          const Rgb inside = out.rgb(box.x0 + (box.x1 - box.x0) / 2, box.y0 + (box.y1 - box.y0) / 2);
          REQUIRE(inside == color);
        }
      }
}

TEST_CASE("zero jitter paints the nominal color on every square pixel") {
  BiasSpec spec;
  spec.hue_jitter_degrees = 0;
  const RgbImage src(32, 32, {0, 0, 0});
  const auto out = inject_square(src, {255, 0, 0}, spec, 7);
  const int s = square_side(spec.square_area_fraction, 32, 32);
  int red = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const auto p = out.rgb(x, y);
      if (p != Rgb{0, 0, 0}) {
        REQUIRE(p == Rgb{255, 0, 0});
        ++red;
      }
    }
  CHECK(red == s * s);
}

TEST_CASE("build_training_split colors train and val independently at the same bias") {
  BiasSpec spec;
  spec.training_bias_percent = 60;
  spec.seed = 8;
  DatasetManifest m = balanced(100, SplitTag::Train);
  auto val = balanced(50, SplitTag::Val);
  for (auto& r : val.records) {
    r.sample_id = "v" + r.sample_id;
    m.records.push_back(r);
  }
  m.normalize();
  auto split = build_training_split(m, spec, kTexture);
  auto tc = color_counts(split.train.manifest);
  CHECK(tc["blue"] == std::array<int, 2>{60, 40});
  CHECK(tc["red"] == std::array<int, 2>{40, 60});
  auto vc = color_counts(split.val.manifest);
  CHECK(vc["blue"] == std::array<int, 2>{30, 20});

  spec.training_bias_percent = 52;
  tc = color_counts(build_training_split(m, spec, kTexture).train.manifest);
  CHECK(tc["blue"] == std::array<int, 2>{52, 48});

  spec.training_bias_percent = 80;
  vc = color_counts(build_training_split(m, spec, kTexture).val.manifest);
  CHECK(vc["blue"] == std::array<int, 2>{40, 10});
  CHECK(vc["red"] == std::array<int, 2>{10, 40});
}

TEST_CASE("test scenarios") {
  BiasSpec spec;
  spec.seed = 12;
  const auto m = balanced(20, SplitTag::Test);

  const auto none = build_test_scenario(m, {Scenario::NoShortcuts}, spec, kTexture);
  for (std::size_t i = 0; i < m.records.size(); ++i) CHECK(none.images[i] == texture(m.records[i]));
  CHECK(color_counts(none.manifest)["none"] == std::array<int, 2>{20, 20});

  CHECK(color_counts(build_test_scenario(m, {Scenario::SameSame}, spec, kTexture).manifest)["blue"] ==
        std::array<int, 2>{20, 0});
  const auto rev = color_counts(build_test_scenario(m, {Scenario::SameDiff, SameDiffMode::Reversed}, spec, kTexture).manifest);
  CHECK(rev.at("red") == std::array<int, 2>{20, 0});
  CHECK(rev.at("blue") == std::array<int, 2>{0, 20});

  const auto random = color_counts(
      build_test_scenario(balanced(200, SplitTag::Test), {Scenario::SameDiff, SameDiffMode::Random}, spec, kTexture).manifest);
  for (int c = 0; c < 2; ++c) {
    CHECK(random.at("blue")[static_cast<std::size_t>(c)] > 70);
    CHECK(random.at("red")[static_cast<std::size_t>(c)] > 70);
  }

  const auto diff = build_test_scenario(m, {Scenario::Diff}, spec, kTexture);
  CHECK(color_counts(diff.manifest).at("green") == std::array<int, 2>{20, 0});
  CHECK(color_counts(diff.manifest).at("magenta") == std::array<int, 2>{0, 20});

  spec.unseen_colors.reset();
  CHECK_THROWS_AS(build_test_scenario(m, {Scenario::Diff}, spec, kTexture), ConfigError);
}

TEST_CASE("diff scenario never shows a training color at zero jitter") {
  BiasSpec spec;
  spec.hue_jitter_degrees = 0;
  const auto m = balanced(10, SplitTag::Test);
  const auto set = build_test_scenario(m, {Scenario::Diff}, spec, kTexture);
  for (const auto& img : set.images)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        const auto p = img.rgb(x, y);
        REQUIRE(p != spec.class_colors[0].rgb);
        REQUIRE(p != spec.class_colors[1].rgb);
      }
}

TEST_CASE("write_materialized stores relative paths and round-trips images") {
  testing::TempDir dir("materialize");
  BiasSpec spec;
  spec.training_bias_percent = 70;
  const auto set = inject_biased(balanced(5), spec, kTexture);
  const auto written = write_materialized(set, dir / "out/manifest.csv", dir / "out/images");
  const auto back = load_manifest(dir / "out/manifest.csv");
  CHECK(back == written);
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    CHECK_FALSE(std::filesystem::path(back.records[i].image_path).is_absolute());
    CHECK(load_from_disk(back, back.records[i]) == set.images[i]);
    CHECK(back.records[i].injected_color == set.manifest.records[i].injected_color);
  }
}
