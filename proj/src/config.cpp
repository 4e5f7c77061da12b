#include "shiftbench/config.hpp"

#include <fstream>
#include <set>

#include "shiftbench/errors.hpp"
#include "shiftbench/stable_hash.hpp"

namespace shiftbench {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

NamedColor color_from_json(const json& j) {
  const auto rgb = j.at("rgb").get<std::array<int, 3>>();
  NamedColor c{j.at("name").get<std::string>(), {}};
  for (std::size_t i = 0; i < 3; ++i) {
    if (rgb[i] < 0 || rgb[i] > 255) throw ConfigError("color channel out of range");
    c.rgb[i] = static_cast<std::uint8_t>(rgb[i]);
  }
  return c;
}

ordered_json color_to_json(const NamedColor& c) {
  return {{"name", c.name}, {"rgb", {c.rgb[0], c.rgb[1], c.rgb[2]}}};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

ordered_json to_json(const SynthSpec& s) {
  ordered_json j;
  j["samples_per_class"] = s.samples_per_class;
  j["image_size"] = s.image_size;
  j["subclasses_per_class"] = s.subclasses_per_class;
  j["noise_level"] = s.noise_level;
  j["seed"] = s.seed;
  j["artifacts"] = ordered_json::array();
  for (const auto& a : s.artifacts) j["artifacts"].push_back({{"name", a.name}, {"prevalence", a.prevalence}});
  return j;
}

SynthSpec synth_spec_from_json(const json& j, const SynthSpec& defaults) {
  reject_unknown(j, {"samples_per_class", "image_size", "subclasses_per_class", "noise_level", "seed", "artifacts"},
                 "synthetic");
  SynthSpec s = defaults;
  s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
  s.image_size = j.value("image_size", s.image_size);
  s.subclasses_per_class = j.value("subclasses_per_class", s.subclasses_per_class);
  s.noise_level = j.value("noise_level", s.noise_level);
  s.seed = j.value("seed", s.seed);
  if (j.contains("artifacts")) {
    s.artifacts.clear();
    for (const auto& a : j["artifacts"])
      s.artifacts.push_back({a.at("name").get<std::string>(), a.value("prevalence", 0.3)});
  }
  s.validate();
  return s;
}

ordered_json to_json(const BiasSpec& b) {
  ordered_json j;
  j["class_colors"] = {color_to_json(b.class_colors[0]), color_to_json(b.class_colors[1])};
  if (b.unseen_colors)
    j["unseen_colors"] = {color_to_json((*b.unseen_colors)[0]), color_to_json((*b.unseen_colors)[1])};
  else
    j["unseen_colors"] = nullptr;
  j["square_area_fraction"] = b.square_area_fraction;
  j["hue_jitter_degrees"] = b.hue_jitter_degrees;
  j["border_margin_px"] = b.border_margin_px;
  return j;
}

BiasSpec bias_spec_from_json(const json& j, const BiasSpec& defaults) {
  BiasSpec b = defaults;
  if (j.contains("class_colors"))
    for (std::size_t c = 0; c < 2; ++c) b.class_colors[c] = color_from_json(j["class_colors"].at(c));
  if (j.contains("unseen_colors")) {
    if (j["unseen_colors"].is_null()) {
      b.unseen_colors.reset();
    } else {
      b.unseen_colors = std::array<NamedColor, 2>{color_from_json(j["unseen_colors"].at(0)),
                                                  color_from_json(j["unseen_colors"].at(1))};
    }
  }
  b.square_area_fraction = j.value("square_area_fraction", b.square_area_fraction);
  b.hue_jitter_degrees = j.value("hue_jitter_degrees", b.hue_jitter_degrees);
  b.border_margin_px = j.value("border_margin_px", b.border_margin_px);
  b.training_bias_percent = j.value("training_bias_percent", b.training_bias_percent);
  b.seed = j.value("seed", b.seed);
  b.validate();
  return b;
}

void ExperimentConfig::validate() const {
  if (experiment_id.empty()) throw ConfigError("experiment_id must not be empty");
  if (synthetic.has_value() == manifest_path.has_value())
    throw ConfigError("exactly one data source (synthetic or manifest) is required");
  if (synthetic) synthetic->validate();
  if (replicas < 1) throw ConfigError("replicas must be >= 1");
  if (bias_sweep.empty()) throw ConfigError("bias_sweep must not be empty");
  std::set<double> seen;
  for (const auto& list : {bias_sweep, control_biases})
    for (double b : list) {
      const bool ok = trap_mode() ? (b >= 0.0 && b <= 1.0) : (b >= 50.0 && b <= 100.0);
      if (!ok) throw ConfigError("bias value out of range: " + std::to_string(b));
      if (!seen.insert(b).second) throw ConfigError("bias value listed twice: " + std::to_string(b));
    }
  model.validate();
  if (!trap_mode()) bias.validate();
  if (!(train_fraction > 0.0 && val_fraction > 0.0 && train_fraction + val_fraction < 1.0))
    throw ConfigError("split fractions must be positive and sum to less than 1");
  if (metrics.empty()) throw ConfigError("at least one metric is required");
  for (const auto& m : metrics)
    if (m != "auc" && m != "balanced_accuracy") throw ConfigError("unknown metric '" + m + "'");
  if (trap) {
    if (!(trap->test_fraction > 0.0 && trap->test_fraction < 1.0)) throw ConfigError("trap test_fraction must be in (0,1)");
    if (!(trap->val_fraction > 0.0 && trap->val_fraction < 1.0)) throw ConfigError("trap val_fraction must be in (0,1)");
    if (trap->anneal.iterations < 1 || trap->anneal.restarts < 1) throw ConfigError("trap annealer settings must be >= 1");
  }
  std::set<std::string> shift_names{"in-distribution"};
  if (diversity) shift_names.insert("diversity-shift-1");
  for (const auto& e : external_tests)
    if (!shift_names.insert(e.shift_set).second) throw ConfigError("duplicate shift set '" + e.shift_set + "'");
}

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  try {
    reject_unknown(j,
                   {"experiment_id", "data_source", "bias_sweep", "control_biases", "replicas", "model", "bias",
                    "split", "diversity", "external_tests", "trap", "metrics", "base_seed",
                    "bootstrap_resamples", "materialize_training_images"},
                   "experiment config");
    ExperimentConfig c;
    c.experiment_id = j.value("experiment_id", c.experiment_id);
    c.base_seed = j.value("base_seed", c.base_seed);
    if (j.contains("trap") && j.contains("bias"))
      throw ConfigError("trap mode and square injection are mutually exclusive");

    const auto& ds = j.at("data_source");
    reject_unknown(ds, {"synthetic", "manifest"}, "data_source");
    if (ds.contains("synthetic")) {
      SynthSpec defaults;
      defaults.seed = stable_hash(c.base_seed, "synth");
      c.synthetic = synth_spec_from_json(ds["synthetic"], defaults);
    }
    if (ds.contains("manifest")) c.manifest_path = resolve(base_dir, ds["manifest"].get<std::string>());

    if (j.contains("trap")) {
      const auto& t = j["trap"];
      reject_unknown(t, {"test_fraction", "val_fraction", "iterations", "restarts"}, "trap");
      TrapConfig tc;
      tc.test_fraction = t.value("test_fraction", tc.test_fraction);
      tc.val_fraction = t.value("val_fraction", tc.val_fraction);
      tc.anneal.iterations = t.value("iterations", tc.anneal.iterations);
      tc.anneal.restarts = t.value("restarts", tc.anneal.restarts);
      c.trap = tc;
      c.bias_sweep = {0.0, 0.25, 0.5, 0.75, 1.0};
    }
    if (j.contains("bias_sweep")) c.bias_sweep = j["bias_sweep"].get<std::vector<double>>();
    c.control_biases = j.value("control_biases", c.control_biases);
    c.replicas = j.value("replicas", c.replicas);
    if (j.contains("model")) c.model = model_spec_from_json(j["model"]);
    if (j.contains("bias")) {
      const auto& b = j["bias"];
      reject_unknown(b, {"class_colors", "unseen_colors", "square_area_fraction", "hue_jitter_degrees",
                         "border_margin_px", "same_diff_mode"},
                     "bias");
      c.bias = bias_spec_from_json(b);
      if (b.contains("same_diff_mode")) c.same_diff_mode = parse_same_diff_mode(b["same_diff_mode"].get<std::string>());
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      reject_unknown(s, {"train_fraction", "val_fraction", "test_size"}, "split");
      c.train_fraction = s.value("train_fraction", c.train_fraction);
      c.val_fraction = s.value("val_fraction", c.val_fraction);
      if (s.contains("test_size") && !s["test_size"].is_null()) c.test_size = s["test_size"].get<std::size_t>();
    }
    if (j.contains("diversity") && !j["diversity"].is_null()) {
      const auto& d = j["diversity"];
      reject_unknown(d, {"n_train_sub", "n_shift_sub"}, "diversity");
      DiversityConfig dc;
      dc.n_train_sub = d.value("n_train_sub", dc.n_train_sub);
      dc.n_shift_sub = d.value("n_shift_sub", dc.n_shift_sub);
      c.diversity = dc;
    }
    if (j.contains("external_tests"))
      for (const auto& e : j["external_tests"])
        c.external_tests.push_back(
            {e.at("shift_set").get<std::string>(), resolve(base_dir, e.at("manifest").get<std::string>())});
    if (j.contains("metrics")) c.metrics = j["metrics"].get<std::vector<std::string>>();
    c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
    c.materialize_training_images = j.value("materialize_training_images", c.materialize_training_images);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["experiment_id"] = c.experiment_id;
  if (c.synthetic) j["data_source"] = {{"synthetic", to_json(*c.synthetic)}};
  else j["data_source"] = {{"manifest", c.manifest_path->generic_string()}};
  j["bias_sweep"] = c.bias_sweep;
  j["control_biases"] = c.control_biases;
  j["replicas"] = c.replicas;
  j["model"] = to_json(c.model);
  if (!c.trap_mode()) {
    j["bias"] = to_json(c.bias);
    j["bias"]["same_diff_mode"] = std::string(to_string(c.same_diff_mode));
  }
  j["split"] = {{"train_fraction", c.train_fraction}, {"val_fraction", c.val_fraction}};
  j["split"]["test_size"] = c.test_size ? ordered_json(*c.test_size) : ordered_json(nullptr);
  if (c.diversity) j["diversity"] = {{"n_train_sub", c.diversity->n_train_sub}, {"n_shift_sub", c.diversity->n_shift_sub}};
  j["external_tests"] = ordered_json::array();
  for (const auto& e : c.external_tests)
    j["external_tests"].push_back({{"shift_set", e.shift_set}, {"manifest", e.manifest.generic_string()}});
  if (c.trap)
    j["trap"] = {{"test_fraction", c.trap->test_fraction},
                 {"val_fraction", c.trap->val_fraction},
                 {"iterations", c.trap->anneal.iterations},
                 {"restarts", c.trap->anneal.restarts}};
  j["metrics"] = c.metrics;
  j["base_seed"] = c.base_seed;
  j["bootstrap_resamples"] = c.bootstrap_resamples;
  j["materialize_training_images"] = c.materialize_training_images;
  return j;
}

}  // namespace shiftbench
