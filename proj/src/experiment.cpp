#include "shiftbench/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>

#include "shiftbench/csv.hpp"
#include "shiftbench/diversity.hpp"
#include "shiftbench/errors.hpp"
#include "shiftbench/features.hpp"
#include "shiftbench/metrics.hpp"
#include "shiftbench/parallel.hpp"
#include "shiftbench/report.hpp"
#include "shiftbench/rng.hpp"
#include "shiftbench/stable_hash.hpp"
#include "shiftbench/trainer.hpp"

namespace shiftbench {

namespace fs = std::filesystem;

namespace {

struct TestPool {
  std::string shift_set;
  DatasetManifest manifest;
};

struct Cell {
  Scenario scenario;
  std::string shift_set;
  bool available = false;
  FeatureSet features;
};

struct RunSpec {
  double bias;
  int replica;
};

std::string run_tag(double bias, int replica) {
  return "b" + csv::format_double(bias) + "_r" + std::to_string(replica);
}

std::string image_key(const DatasetManifest& m, const SampleRecord& r) {
  return (fs::absolute(m.root) / r.image_path).lexically_normal().generic_string();
}

// Decoded source images shared by every run.
class ImageCache {
 public:
  void add(const DatasetManifest& m, int jobs) {
    std::vector<std::pair<std::string, const SampleRecord*>> todo;
    for (const auto& r : m.records) {
      auto key = image_key(m, r);
      if (!images_.count(key) && !pending_.count(key)) {
        pending_.insert(key);
        todo.emplace_back(std::move(key), &r);
      }
    }
    std::vector<RgbImage> loaded(todo.size());
    parallel_for(todo.size(), jobs, [&](std::size_t i) { loaded[i] = load_from_disk(m, *todo[i].second); });
    for (std::size_t i = 0; i < todo.size(); ++i) {
      pending_.erase(todo[i].first);
      images_.emplace(todo[i].first, std::move(loaded[i]));
    }
  }

  ImageLoader loader() const {
    return [this](const DatasetManifest& m, const SampleRecord& r) -> RgbImage {
      auto it = images_.find(image_key(m, r));
      if (it == images_.end()) return load_from_disk(m, r);
      return it->second;
    };
  }

 private:
  std::map<std::string, RgbImage> images_;
  std::set<std::string> pending_;
};

DatasetManifest merge(const DatasetManifest& a, const DatasetManifest& b) {
  auto recs = a.records;
  recs.insert(recs.end(), b.records.begin(), b.records.end());
  auto m = a.with_records(std::move(recs));
  m.normalize();
  return m;
}

DatasetManifest retag(DatasetManifest m, SplitTag tag) {
  for (auto& r : m.records) r.split_tag = tag;
  return m;
}

FeatureSet gather(const FeatureSet& all, const std::map<std::string, Eigen::Index>& column,
                  const std::vector<std::string>& ids) {
  FeatureSet out;
  out.X.resize(all.X.rows(), static_cast<Eigen::Index>(ids.size()));
  out.y.resize(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto c = column.at(ids[i]);
    out.X.col(static_cast<Eigen::Index>(i)) = all.X.col(c);
    out.y(static_cast<Eigen::Index>(i)) = all.y(c);
    out.ids.push_back(ids[i]);
  }
  return out;
}

double metric_value(const std::string& metric, const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  const std::span s(scores.data(), static_cast<std::size_t>(scores.size()));
  const std::span l(labels.data(), static_cast<std::size_t>(labels.size()));
  return metric == "auc" ? auc(s, l) : balanced_accuracy(s, l);
}

[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError(context + ": " + e.what());
  }
}

class ExperimentRunner {
 public:
  ExperimentRunner(const ExperimentConfig& config, const fs::path& out, const RunOptions& options)
      : cfg_(config), out_(out), opt_(options) {}

  ScenarioGridResult run() {
    cfg_.validate();
    if (!opt_.resume) {
      fs::remove_all(out_ / "runs");
      fs::remove_all(out_ / "models");
    }
    fs::create_directories(out_ / "manifests");
    fs::create_directories(out_ / "runs");
    fs::create_directories(out_ / "models");
    csv::write_atomic(out_ / "config.json", to_json(cfg_).dump(2) + "\n");

    load_source();
    if (cfg_.trap_mode()) prepare_trap();
    else prepare_square();

    std::vector<RunSpec> runs;
    for (const auto& list : {cfg_.bias_sweep, cfg_.control_biases})
      for (double b : list)
        for (int r = 0; r < cfg_.replicas; ++r) runs.push_back({b, r});

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (opt_.resume && fs::exists(fragment_path(runs[i]))) {
        say("skip " + run_tag(runs[i].bias, runs[i].replica) + " (on disk)");
        continue;
      }
      todo.push_back(i);
    }

    parallel_for(todo.size(), opt_.jobs, [&](std::size_t k) {
      const auto& rs = runs[todo[k]];
      try {
        execute(rs);
      } catch (...) {
        rethrow_with_context("bias " + csv::format_double(rs.bias) + ", replica " + std::to_string(rs.replica));
      }
    });

    ScenarioGridResult result;
    for (const auto& rs : runs) {
      auto part = parse_results_csv(fragment_path(rs));
      result.records.insert(result.records.end(), part.begin(), part.end());
    }
    sort_records(result.records);
    csv::write_atomic(out_ / "results.csv", results_to_csv(result.records));

    std::set<std::pair<Scenario, std::string>> seen;
    for (const auto& r : result.records) seen.insert({r.scenario, r.shift_set});
    for (const auto& c : cells_)
      result.cells.push_back({c.scenario, c.shift_set, c.available, c.available && seen.count({c.scenario, c.shift_set}) > 0});
    write_grid(result);
    write_analysis(result.records);
    return result;
  }

 private:
  void say(const std::string& msg) const {
    if (opt_.log) {
      std::lock_guard lock(log_mutex_);
      opt_.log(msg);
    }
  }

  fs::path fragment_path(const RunSpec& rs) const { return out_ / "runs" / (run_tag(rs.bias, rs.replica) + ".csv"); }

  void load_source() {
    if (cfg_.synthetic) {
      const auto data = out_ / "data";
      if (opt_.resume && fs::exists(data / "manifest.csv")) {
        source_ = load_manifest(data / "manifest.csv");
      } else {
        say("generating synthetic dataset");
        source_ = generate_synthetic_dataset(*cfg_.synthetic, data, opt_.jobs);
      }
    } else {
      source_ = load_manifest(*cfg_.manifest_path);
    }
  }

  void save_pool(const DatasetManifest& m, const std::string& name) const {
    save_manifest(m.rebased(out_ / "manifests"), out_ / "manifests" / (name + ".csv"));
  }

  std::vector<TestPool> external_pools() const {
    std::vector<TestPool> pools;
    for (const auto& e : cfg_.external_tests) pools.push_back({e.shift_set, retag(load_manifest(e.manifest), SplitTag::Test)});
    return pools;
  }

  void equalize(std::vector<TestPool>& pools) const {
    if (pools.empty()) return;
    std::vector<DatasetManifest> ms;
    for (const auto& p : pools) ms.push_back(p.manifest);
    const auto eq = equalize_test_sizes(ms, cfg_.test_size, stable_hash(cfg_.base_seed, "equalize"));
    for (std::size_t i = 0; i < pools.size(); ++i) pools[i].manifest = eq[i];
  }

  std::optional<BinaryTaskSpec> make_task() const {
    if (!cfg_.diversity) return std::nullopt;
    auto task = build_superclass_tasks(source_, stable_hash(cfg_.base_seed, "task"), cfg_.diversity->n_train_sub,
                                       cfg_.diversity->n_shift_sub);
    csv::write_atomic(out_ / "manifests" / "task.json", to_json(task).dump(2) + "\n");
    return task;
  }

  void prepare_square() {
    std::vector<TestPool> pools;
    const bool untagged = std::all_of(source_.records.begin(), source_.records.end(),
                                      [](const SampleRecord& r) { return r.split_tag == SplitTag::Unassigned; });
    if (auto task = make_task()) {
      auto split = split_diversity(source_, *task, cfg_.train_fraction, cfg_.val_fraction);
      train_val_ = merge(split.train, split.val);
      pools.push_back({kInDistribution, split.iid_test});
      pools.push_back({"diversity-shift-1", split.shifted_test});
    } else if (untagged) {
      BinaryTaskSpec all;
      all.seed = stable_hash(cfg_.base_seed, "task");
      for (const auto& r : source_.records) {
        auto& v = all.train_subclasses[static_cast<std::size_t>(r.label)];
        if (std::find(v.begin(), v.end(), r.subclass) == v.end()) v.push_back(r.subclass);
      }
      auto split = split_diversity(source_, all, cfg_.train_fraction, cfg_.val_fraction);
      train_val_ = merge(split.train, split.val);
      pools.push_back({kInDistribution, split.iid_test});
    } else {
      train_val_ = source_.filter([](const SampleRecord& r) { return r.split_tag == SplitTag::Train || r.split_tag == SplitTag::Val; });
      pools.push_back({kInDistribution, source_.filter([](const SampleRecord& r) { return r.split_tag == SplitTag::Test; })});
    }
    for (auto& p : external_pools()) pools.push_back(std::move(p));
    equalize(pools);

    save_pool(train_val_, "train_val");
    cache_.add(train_val_, opt_.jobs);
    for (const auto& p : pools) {
      save_pool(p.manifest, "test_" + p.shift_set);
      cache_.add(p.manifest, opt_.jobs);
    }

    BiasSpec test_spec = cfg_.bias;
    test_spec.seed = stable_hash(cfg_.base_seed, "test");
    const auto load = cache_.loader();
    for (const auto& p : pools)
      for (auto s : kAllScenarios) {
        Cell cell{s, p.shift_set, !(s == Scenario::Diff && !cfg_.bias.unseen_colors), {}};
        if (cell.available) {
          const std::string name = p.shift_set + "__" + std::string(to_string(s));
          const auto manifest_path = out_ / "manifests" / "cells" / (name + ".csv");
          MaterializedSet set;
          if (opt_.resume && fs::exists(manifest_path)) {
            set.manifest = load_manifest(manifest_path);
            for (const auto& r : set.manifest.records) set.images.push_back(load_from_disk(set.manifest, r));
          } else {
            set = build_test_scenario(p.manifest, {s, cfg_.same_diff_mode}, test_spec, load);
            write_materialized(set, manifest_path, out_ / "images" / p.shift_set / std::string(to_string(s)));
          }
          cell.features = featurize_set(set, cfg_.model.input_side, opt_.jobs);
        }
        cells_.push_back(std::move(cell));
      }
  }

  void prepare_trap() {
    std::vector<TestPool> pools;
    if (auto task = make_task()) {
      std::array<std::set<std::string>, 2> train_subs, shift_subs;
      for (std::size_t c = 0; c < 2; ++c) {
        train_subs[c].insert(task->train_subclasses[c].begin(), task->train_subclasses[c].end());
        shift_subs[c].insert(task->shifted_subclasses[c].begin(), task->shifted_subclasses[c].end());
      }
      trap_pool_ = source_.filter([&](const SampleRecord& r) { return train_subs[static_cast<std::size_t>(r.label)].count(r.subclass) > 0; });
      pools.push_back({"diversity-shift-1",
                       retag(source_.filter([&](const SampleRecord& r) {
                               return shift_subs[static_cast<std::size_t>(r.label)].count(r.subclass) > 0;
                             }),
                             SplitTag::Test)});
    } else {
      trap_pool_ = source_;
    }
    for (auto& p : external_pools()) pools.push_back(std::move(p));
    equalize(pools);
    save_pool(trap_pool_, "trap_pool");

    const auto side = cfg_.model.input_side;
    pool_features_ = featurize_manifest(trap_pool_, side, load_from_disk, opt_.jobs);
    for (std::size_t i = 0; i < pool_features_.ids.size(); ++i) pool_column_[pool_features_.ids[i]] = static_cast<Eigen::Index>(i);

    for (auto s : kAllScenarios) cells_.push_back({s, kInDistribution, s == Scenario::SameSame || s == Scenario::SameDiff, {}});
    for (const auto& p : pools) {
      save_pool(p.manifest, "test_" + p.shift_set);
      for (auto s : kAllScenarios) {
        Cell cell{s, p.shift_set, s == Scenario::Diff, {}};
        if (cell.available) cell.features = featurize_manifest(p.manifest, side, load_from_disk, opt_.jobs);
        cells_.push_back(std::move(cell));
      }
    }

    trap_splits_.resize(static_cast<std::size_t>(cfg_.replicas));
    fs::create_directories(out_ / "manifests" / "trap");
    parallel_for(trap_splits_.size(), opt_.jobs, [&](std::size_t r) {
      const auto path = out_ / "manifests" / "trap" / ("r" + std::to_string(r) + ".json");
      if (opt_.resume && fs::exists(path)) {
        std::ifstream in(path);
        const auto j = nlohmann::json::parse(in);
        trap_splits_[r] = {trap_split_from_json(j.at("random")), trap_split_from_json(j.at("trap"))};
        return;
      }
      const auto seed = stable_hash(cfg_.base_seed, "trap", r);
      AnnealSettings settings = cfg_.trap->anneal;
      settings.jobs = 1;
      auto random = random_trap_split(trap_pool_, cfg_.trap->test_fraction, seed);
      auto trap = anneal_trap_split(trap_pool_, cfg_.trap->test_fraction, settings, seed).best;
      nlohmann::ordered_json j;
      j["random"] = to_json(random);
      j["trap"] = to_json(trap);
      csv::write_atomic(path, j.dump(2) + "\n");
      trap_splits_[r] = {std::move(random), std::move(trap)};
    });
  }

  void execute(const RunSpec& rs) {
    const std::string tag = run_tag(rs.bias, rs.replica);
    say("run " + tag);
    const auto seed = run_seed(cfg_.base_seed, rs.bias, rs.replica);
    ModelSpec ms = cfg_.model;
    ms.seed = stable_hash(seed, "model");

    FeatureSet train_set, val_set;
    std::map<std::pair<Scenario, std::string>, const FeatureSet*> eval;
    FeatureSet trap_test;

    if (cfg_.trap_mode()) {
      const auto& [random, trap] = trap_splits_[static_cast<std::size_t>(rs.replica)];
      const auto split = interpolate_split(random, trap, rs.bias, trap_pool_, stable_hash(seed, "interpolate"));
      csv::write_atomic(out_ / "manifests" / "runs" / (tag + "_split.json"), to_json(split).dump(2) + "\n");

      std::array<std::vector<std::string>, 2> train_side;
      const std::set<std::string> train_ids(split.train_ids.begin(), split.train_ids.end());
      for (const auto& r : trap_pool_.records)
        if (train_ids.count(r.sample_id)) train_side[static_cast<std::size_t>(r.label)].push_back(r.sample_id);
      std::vector<std::string> tr, va;
      for (std::size_t c = 0; c < 2; ++c) {
        Rng rng(stable_hash(seed, "val", c));
        rng.shuffle(std::span(train_side[c]));
        const auto n = train_side[c].size();
        const auto n_val = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::floor(cfg_.trap->val_fraction * static_cast<double>(n) + 0.5)), 1, n - 1);
        va.insert(va.end(), train_side[c].begin(), train_side[c].begin() + static_cast<std::ptrdiff_t>(n_val));
        tr.insert(tr.end(), train_side[c].begin() + static_cast<std::ptrdiff_t>(n_val), train_side[c].end());
      }
      std::sort(tr.begin(), tr.end());
      std::sort(va.begin(), va.end());
      train_set = gather(pool_features_, pool_column_, tr);
      val_set = gather(pool_features_, pool_column_, va);
      trap_test = gather(pool_features_, pool_column_, split.test_ids);
      eval[{Scenario::SameSame, kInDistribution}] = &val_set;
      eval[{Scenario::SameDiff, kInDistribution}] = &trap_test;
    } else {
      BiasSpec bs = cfg_.bias;
      bs.training_bias_percent = rs.bias;
      bs.seed = stable_hash(seed, "inject");
      const auto split = build_training_split(train_val_, bs, cache_.loader());
      const auto runs_dir = out_ / "manifests" / "runs";
      if (cfg_.materialize_training_images) {
        write_materialized(split.train, runs_dir / (tag + "_train.csv"), out_ / "images" / "runs" / tag / "train");
        write_materialized(split.val, runs_dir / (tag + "_val.csv"), out_ / "images" / "runs" / tag / "val");
      } else {
        save_manifest(split.train.manifest.rebased(runs_dir), runs_dir / (tag + "_train.csv"));
        save_manifest(split.val.manifest.rebased(runs_dir), runs_dir / (tag + "_val.csv"));
      }
      train_set = featurize_set(split.train, ms.input_side);
      val_set = featurize_set(split.val, ms.input_side);
    }
    for (const auto& c : cells_)
      if (c.available && !eval.count({c.scenario, c.shift_set})) eval[{c.scenario, c.shift_set}] = &c.features;

    const TrainedModel model = train(train_set, val_set, ms);
    save_model(model, out_ / "models" / (tag + ".model"));

    std::vector<RunRecord> records;
    for (const auto& c : cells_) {
      if (!c.available) continue;
      const FeatureSet& fsx = *eval.at({c.scenario, c.shift_set});
      const Eigen::VectorXd scores = predict_scores(model, fsx.X);
      for (const auto& metric : cfg_.metrics)
        records.push_back({cfg_.experiment_id, c.scenario, c.shift_set, cfg_.normalized_bias(rs.bias), rs.replica,
                           metric, metric_value(metric, scores, fsx.y)});
    }
    sort_records(records);
    csv::write_atomic(fragment_path(rs), results_to_csv(records));
  }

  void write_grid(const ScenarioGridResult& result) const {
    nlohmann::ordered_json j;
    j["experiment_id"] = cfg_.experiment_id;
    j["cells"] = nlohmann::ordered_json::array();
    for (const auto& c : result.cells)
      j["cells"].push_back({{"scenario", std::string(to_string(c.scenario))},
                            {"shift_set", c.shift_set},
                            {"available", c.available},
                            {"completed", c.completed}});
    csv::write_atomic(out_ / "grid.json", j.dump(2) + "\n");
  }

  void write_analysis(const std::vector<RunRecord>& records) const {
    AnalysisOptions ao;
    for (double b : cfg_.control_biases) ao.excluded_biases.push_back(cfg_.normalized_bias(b));
    ao.bootstrap_resamples = cfg_.bootstrap_resamples;
    ao.seed = stable_hash(cfg_.base_seed, "analysis");
    const auto res = analyze(records, ao);
    csv::write_atomic(out_ / "coefficients.csv", coefficients_to_csv(res.fits));
    csv::write_atomic(out_ / "attenuation.csv", attenuation_to_csv(res.attenuation));
    csv::write_atomic(out_ / "confidence.csv", confidence_to_csv(res.confidence));
    csv::write_atomic(out_ / "aggregates.csv", aggregates_to_csv(res.points));
    std::string tables;
    for (const auto& metric : cfg_.metrics) {
      std::vector<RegressionFit> subset;
      for (const auto& f : res.fits)
        if (f.key.metric_name == metric) subset.push_back(f);
      if (subset.empty()) continue;
      tables += "metric: " + metric + "\n" + render_table(angular_coefficient_table(subset)) + "\n";
    }
    csv::write_atomic(out_ / "coefficients.txt", tables);
    csv::write_atomic(out_ / "report.svg", render_report_svg(records, res.fits, cfg_.metrics.front()));
  }

  const ExperimentConfig& cfg_;
  fs::path out_;
  RunOptions opt_;
  mutable std::mutex log_mutex_;

  DatasetManifest source_;
  DatasetManifest train_val_;
  ImageCache cache_;
  std::vector<Cell> cells_;

  DatasetManifest trap_pool_;
  FeatureSet pool_features_;
  std::map<std::string, Eigen::Index> pool_column_;
  std::vector<std::pair<TrapSplit, TrapSplit>> trap_splits_;
};

}  // namespace

const GridCell* ScenarioGridResult::find(Scenario s, const std::string& shift_set) const {
  for (const auto& c : cells)
    if (c.scenario == s && c.shift_set == shift_set) return &c;
  return nullptr;
}

std::uint64_t run_seed(std::uint64_t base_seed, double bias, int replica) {
  return stable_hash(base_seed, bias, replica);
}

ScenarioGridResult run_experiment(const ExperimentConfig& config, const fs::path& out_dir, const RunOptions& options) {
  return ExperimentRunner(config, out_dir, options).run();
}

}  // namespace shiftbench
