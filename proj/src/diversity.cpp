#include "shiftbench/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "shiftbench/errors.hpp"
#include "shiftbench/rng.hpp"
#include "shiftbench/stable_hash.hpp"

namespace shiftbench {

void BinaryTaskSpec::validate(int min_train, int min_shift) const {
  for (std::size_t c = 0; c < 2; ++c) {
    const std::set<std::string> tr(train_subclasses[c].begin(), train_subclasses[c].end());
    for (const auto& s : shifted_subclasses[c])
      if (tr.count(s)) throw ConfigError("subclass '" + s + "' is both train and shifted");
    if (static_cast<int>(train_subclasses[c].size()) < min_train ||
        static_cast<int>(shifted_subclasses[c].size()) < min_shift)
      throw ConfigError("class " + std::to_string(c) + " needs at least " + std::to_string(min_train) +
                        " train and " + std::to_string(min_shift) + " shifted subclasses");
  }
}

nlohmann::ordered_json to_json(const BinaryTaskSpec& t) {
  nlohmann::ordered_json j;
  j["superclass_a"] = t.superclass_a;
  j["superclass_b"] = t.superclass_b;
  j["train_subclasses"] = nlohmann::ordered_json::array({t.train_subclasses[0], t.train_subclasses[1]});
  j["shifted_subclasses"] = nlohmann::ordered_json::array({t.shifted_subclasses[0], t.shifted_subclasses[1]});
  j["seed"] = t.seed;
  return j;
}

BinaryTaskSpec task_from_json(const nlohmann::json& j) {
  try {
    BinaryTaskSpec t;
    t.superclass_a = j.at("superclass_a").get<std::string>();
    t.superclass_b = j.at("superclass_b").get<std::string>();
    t.train_subclasses = j.at("train_subclasses").get<std::array<std::vector<std::string>, 2>>();
    t.shifted_subclasses = j.at("shifted_subclasses").get<std::array<std::vector<std::string>, 2>>();
    t.seed = j.value("seed", std::uint64_t{0});
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("task spec: ") + e.what());
  }
}

BinaryTaskSpec build_superclass_tasks(const DatasetManifest& manifest, std::uint64_t seed,
                                      int n_train_sub, int n_shift_sub) {
  if (n_train_sub < 1 || n_shift_sub < 1) throw ConfigError("subclass counts must be positive");
  BinaryTaskSpec task;
  task.superclass_a = manifest.class_names[0];
  task.superclass_b = manifest.class_names[1];
  task.seed = seed;
  for (int c = 0; c < 2; ++c) {
    std::set<std::string> distinct;
    for (const auto& r : manifest.records)
      if (r.label == c) distinct.insert(r.subclass);
    std::vector<std::string> subs(distinct.begin(), distinct.end());
    const auto need = static_cast<std::size_t>(n_train_sub + n_shift_sub);
    if (subs.size() < need)
      throw DataError("insufficient subclasses for class " + std::to_string(c) + ": have " +
                      std::to_string(subs.size()) + ", need " + std::to_string(need));
    Rng rng(stable_hash(seed, "subclasses", c));
    rng.shuffle(std::span(subs));
    auto& tr = task.train_subclasses[static_cast<std::size_t>(c)];
    auto& sh = task.shifted_subclasses[static_cast<std::size_t>(c)];
    tr.assign(subs.begin(), subs.begin() + n_train_sub);
    sh.assign(subs.begin() + n_train_sub, subs.begin() + static_cast<std::ptrdiff_t>(need));
    std::sort(tr.begin(), tr.end());
    std::sort(sh.begin(), sh.end());
  }
  return task;
}

DiversitySplit split_diversity(const DatasetManifest& manifest, const BinaryTaskSpec& task,
                               double train_frac, double val_frac) {
  if (!(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0))
    throw ConfigError("fractions must be positive with train_frac + val_frac < 1");
  task.validate(1, 0);

  DiversitySplit out{manifest.with_records({}), manifest.with_records({}), manifest.with_records({}),
                     manifest.with_records({})};
  for (int c = 0; c < 2; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const std::set<std::string> tr(task.train_subclasses[ci].begin(), task.train_subclasses[ci].end());
    const std::set<std::string> sh(task.shifted_subclasses[ci].begin(), task.shifted_subclasses[ci].end());
    std::vector<SampleRecord> pool;
    for (const auto& r : manifest.records) {
      if (r.label != c) continue;
      if (tr.count(r.subclass)) {
        pool.push_back(r);
      } else if (sh.count(r.subclass)) {
        auto s = r;
        s.split_tag = SplitTag::Test;
        out.shifted_test.records.push_back(std::move(s));
      }
    }
    Rng rng(stable_hash(task.seed, "split", c));
    rng.shuffle(std::span(pool));
    const auto n = pool.size();
    const auto n_train = static_cast<std::size_t>(std::floor(train_frac * n + 0.5));
    const auto n_val = std::min(n - std::min(n, n_train), static_cast<std::size_t>(std::floor(val_frac * n + 0.5)));
    for (std::size_t i = 0; i < n; ++i) {
      auto& r = pool[i];
      if (i < n_train) {
        r.split_tag = SplitTag::Train;
        out.train.records.push_back(std::move(r));
      } else if (i < n_train + n_val) {
        r.split_tag = SplitTag::Val;
        out.val.records.push_back(std::move(r));
      } else {
        r.split_tag = SplitTag::Test;
        out.iid_test.records.push_back(std::move(r));
      }
    }
  }
  const std::pair<const char*, DatasetManifest*> parts[] = {
      {"train", &out.train}, {"val", &out.val}, {"iid_test", &out.iid_test}, {"shifted_test", &out.shifted_test}};
  const bool has_shift = !task.shifted_subclasses[0].empty() || !task.shifted_subclasses[1].empty();
  for (auto& [name, m] : parts) {
    if (m->records.empty() && (has_shift || m != &out.shifted_test))
      throw DataError(std::string("empty partition: ") + name);
    m->normalize();
  }
  return out;
}

std::vector<DatasetManifest> equalize_test_sizes(const std::vector<DatasetManifest>& tests,
                                                 std::optional<std::size_t> target_size,
                                                 std::uint64_t seed) {
  if (tests.empty()) return {};
  std::size_t smallest = tests.front().records.size();
  for (const auto& t : tests) {
    if (t.records.empty()) throw DataError("empty test manifest");
    smallest = std::min(smallest, t.records.size());
  }
  const std::size_t target = target_size.value_or(smallest);
  if (target > smallest)
    throw DataError("target size " + std::to_string(target) + " exceeds smallest test set (" +
                    std::to_string(smallest) + ")");

  std::vector<DatasetManifest> out;
  for (std::size_t t = 0; t < tests.size(); ++t) {
    const auto& m = tests[t];
    const auto counts = m.class_counts();
    const double exact0 = static_cast<double>(target) * counts[0] / m.records.size();
    auto k0 = static_cast<std::size_t>(std::floor(exact0 + 0.5));
    k0 = std::min(k0, counts[0]);
    if (target - k0 > counts[1]) k0 = target - counts[1];
    const std::array<std::size_t, 2> keep{k0, target - k0};

    std::vector<SampleRecord> chosen;
    for (int c = 0; c < 2; ++c) {
      std::vector<const SampleRecord*> members;
      for (const auto& r : m.records)
        if (r.label == c) members.push_back(&r);
      Rng rng(stable_hash(seed, "equalize", t, c));
      rng.shuffle(std::span(members));
      for (std::size_t i = 0; i < keep[static_cast<std::size_t>(c)]; ++i) chosen.push_back(*members[i]);
    }
    auto e = m.with_records(std::move(chosen));
    e.normalize();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace shiftbench
