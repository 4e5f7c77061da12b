#include "shiftbench/trap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <set>

#include <Eigen/Dense>

#include "shiftbench/errors.hpp"
#include "shiftbench/parallel.hpp"
#include "shiftbench/rng.hpp"
#include "shiftbench/stable_hash.hpp"

namespace shiftbench {

namespace {

struct Instance {
  std::vector<std::string> ids;
  std::vector<int> labels;
  Eigen::MatrixXi flags;  // samples x artifacts
  std::map<std::string, std::size_t> index;

  explicit Instance(const DatasetManifest& m) {
    if (m.artifact_names.empty()) throw DataError("trap objective needs at least one artifact column");
    const auto n = m.records.size();
    flags.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m.artifact_names.size()));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = m.records[i];
      ids.push_back(r.sample_id);
      labels.push_back(r.label);
      index[r.sample_id] = i;
      for (std::size_t a = 0; a < m.artifact_names.size(); ++a) {
        auto it = r.artifact_flags.find(m.artifact_names[a]);
        flags(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) =
            it != r.artifact_flags.end() && it->second;
      }
    }
  }

  std::size_t size() const { return ids.size(); }

  // 1 = test side.
  std::vector<std::uint8_t> sides(const TrapSplit& s) const {
    std::vector<std::uint8_t> side(size(), 2);
    auto mark = [&](const std::vector<std::string>& v, std::uint8_t value) {
      for (const auto& id : v) {
        auto it = index.find(id);
        if (it == index.end()) throw DataError("split references unknown sample '" + id + "'");
        if (side[it->second] != 2) throw DataError("sample '" + id + "' assigned twice");
        side[it->second] = value;
      }
    };
    mark(s.train_ids, 0);
    mark(s.test_ids, 1);
    if (std::find(side.begin(), side.end(), 2) != side.end())
      throw DataError("split does not cover every eligible sample");
    return side;
  }

  TrapSplit to_split(const std::vector<std::uint8_t>& side) const {
    TrapSplit s;
    for (std::size_t i = 0; i < size(); ++i) (side[i] ? s.test_ids : s.train_ids).push_back(ids[i]);
    std::sort(s.train_ids.begin(), s.train_ids.end());
    std::sort(s.test_ids.begin(), s.test_ids.end());
    return s;
  }

  double objective(const std::vector<std::uint8_t>& side) const {
    const auto a_count = flags.cols();
    // counts(side, label) and prevalence sums per (side, label).
    Eigen::Matrix2d n = Eigen::Matrix2d::Zero();
    Eigen::MatrixXd hits = Eigen::MatrixXd::Zero(4, a_count);
    for (std::size_t i = 0; i < size(); ++i) {
      const int row = 2 * side[i] + labels[i];
      n(side[i], labels[i]) += 1.0;
      hits.row(row) += flags.row(static_cast<Eigen::Index>(i)).cast<double>();
    }
    double total = 0.0;
    for (Eigen::Index a = 0; a < a_count; ++a)
      for (int label : {1, 0}) {
        const double p_train = n(0, label) > 0 ? hits(label, a) / n(0, label) : 0.0;
        const double p_test = n(1, label) > 0 ? hits(2 + label, a) / n(1, label) : 0.0;
        total += std::fabs(p_train - p_test);
      }
    return total;
  }
};

// Incremental state for one annealing chain.
class Chain {
 public:
  Chain(const Instance& inst, const std::vector<std::uint8_t>& side) : inst_(inst), side_(side) {
    const auto a_count = inst.flags.cols();
    for (int c = 0; c < 2; ++c)
      for (int s = 0; s < 2; ++s) hits_[s][c] = Eigen::VectorXi::Zero(a_count);
    for (std::size_t i = 0; i < inst.size(); ++i) {
      const int c = inst.labels[i], s = side[i];
      members_[s][c].push_back(i);
      hits_[s][c] += inst.flags.row(static_cast<Eigen::Index>(i)).transpose();
    }
    for (int c = 0; c < 2; ++c) term_[c] = term(c, hits_[0][c], hits_[1][c]);
    train_total_ = members_[0][0].size() + members_[0][1].size();
  }

  double value() const { return term_[0] + term_[1]; }

  struct Move {
    int label;
    std::size_t train_pos, test_pos;
    double new_term;
  };

  Move propose(Rng& rng) const {
    std::size_t k = rng.below(train_total_);
    const int c = k < members_[0][0].size() ? 0 : 1;
    if (c == 1) k -= members_[0][0].size();
    const std::size_t j = rng.below(members_[1][c].size());
    const auto fi = inst_.flags.row(static_cast<Eigen::Index>(members_[0][c][k])).transpose();
    const auto fj = inst_.flags.row(static_cast<Eigen::Index>(members_[1][c][j])).transpose();
    const Eigen::VectorXi train_hits = hits_[0][c] - fi + fj;
    const Eigen::VectorXi test_hits = hits_[1][c] + fi - fj;
    return {c, k, j, term(c, train_hits, test_hits)};
  }

  double delta(const Move& m) const { return m.new_term - term_[m.label]; }

  void apply(const Move& m) {
    const int c = m.label;
    auto& i = members_[0][c][m.train_pos];
    auto& j = members_[1][c][m.test_pos];
    const auto fi = inst_.flags.row(static_cast<Eigen::Index>(i)).transpose();
    const auto fj = inst_.flags.row(static_cast<Eigen::Index>(j)).transpose();
    hits_[0][c] += fj - fi;
    hits_[1][c] += fi - fj;
    side_[i] = 1;
    side_[j] = 0;
    std::swap(i, j);
    term_[c] = m.new_term;
  }

  const std::vector<std::uint8_t>& side() const { return side_; }

 private:
  double term(int c, const Eigen::VectorXi& train_hits, const Eigen::VectorXi& test_hits) const {
    const double nt = static_cast<double>(members_[0][c].size());
    const double ns = static_cast<double>(members_[1][c].size());
    return ((train_hits.cast<double>() / nt) - (test_hits.cast<double>() / ns)).cwiseAbs().sum();
  }

  const Instance& inst_;
  std::vector<std::uint8_t> side_;
  std::vector<std::size_t> members_[2][2];  // [side][label]
  Eigen::VectorXi hits_[2][2];
  double term_[2] = {0.0, 0.0};
  std::size_t train_total_ = 0;
};

std::vector<std::uint8_t> random_sides(const Instance& inst, const std::array<std::size_t, 2>& n_test,
                                       std::uint64_t seed) {
  std::vector<std::uint8_t> side(inst.size(), 0);
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < inst.size(); ++i)
      if (inst.labels[i] == c) members.push_back(i);
    Rng rng(stable_hash(seed, "trap_random", c));
    rng.shuffle(std::span(members));
    for (std::size_t k = 0; k < n_test[static_cast<std::size_t>(c)]; ++k) side[members[k]] = 1;
  }
  return side;
}

}  // namespace

nlohmann::ordered_json to_json(const TrapSplit& s) {
  nlohmann::ordered_json j;
  j["lambda"] = s.lambda;
  j["objective"] = s.objective_value;
  j["train_ids"] = s.train_ids;
  j["test_ids"] = s.test_ids;
  return j;
}

TrapSplit trap_split_from_json(const nlohmann::json& j) {
  try {
    TrapSplit s;
    s.lambda = j.at("lambda").get<double>();
    s.objective_value = j.at("objective").get<double>();
    s.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    s.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("trap split: ") + e.what());
  }
}

std::array<std::size_t, 2> trap_test_counts(const DatasetManifest& manifest, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0,1)");
  const auto counts = manifest.class_counts();
  std::array<std::size_t, 2> out{};
  for (std::size_t c = 0; c < 2; ++c) {
    out[c] = static_cast<std::size_t>(std::floor(test_fraction * counts[c] + 0.5));
    if (out[c] < 1 || out[c] + 1 > counts[c])
      throw DataError("class " + std::to_string(c) + " too small (" + std::to_string(counts[c]) +
                      " samples) to populate both train and test");
  }
  return out;
}

double trap_objective(const TrapSplit& split, const DatasetManifest& manifest) {
  const Instance inst(manifest);
  return inst.objective(inst.sides(split));
}

TrapSplit random_trap_split(const DatasetManifest& manifest, double test_fraction, std::uint64_t seed) {
  const Instance inst(manifest);
  const auto side = random_sides(inst, trap_test_counts(manifest, test_fraction), seed);
  auto s = inst.to_split(side);
  s.objective_value = inst.objective(side);
  s.lambda = 0.0;
  return s;
}

AnnealReport anneal_trap_split(const DatasetManifest& manifest, double test_fraction,
                               const AnnealSettings& settings, std::uint64_t seed) {
  if (settings.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (settings.restarts < 1) throw ConfigError("restarts must be >= 1");
  const Instance inst(manifest);
  const auto n_test = trap_test_counts(manifest, test_fraction);

  struct Outcome {
    std::vector<std::uint8_t> best_side;
    std::vector<double> trace;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(settings.restarts));

  parallel_for(outcomes.size(), settings.jobs, [&](std::size_t r) {
    const std::uint64_t start_seed = r == 0 ? seed : stable_hash(seed, "restart", r);
    Chain chain(inst, random_sides(inst, n_test, start_seed));
    Rng rng(stable_hash(seed, "anneal", r));
    Outcome& out = outcomes[r];
    out.best_side = chain.side();
    double best = chain.value();
    out.trace.reserve(static_cast<std::size_t>(settings.iterations));
    out.trace.push_back(best);
    if (settings.iterations == 1) return;

    double t0 = 0.0;
    constexpr int kProbes = 64;
    for (int p = 0; p < kProbes; ++p) t0 += std::fabs(chain.delta(chain.propose(rng)));
    t0 = std::max(t0 / kProbes, 1e-6);
    const double alpha =
        std::pow(settings.final_temperature_ratio, 1.0 / std::max(1, settings.iterations - 1));
    double temperature = t0;

    for (int it = 1; it < settings.iterations; ++it) {
      const auto move = chain.propose(rng);
      const double d = chain.delta(move);
      const double u = rng.uniform();
      if (d >= 0.0 || u < std::exp(d / temperature)) {
        chain.apply(move);
        if (chain.value() > best) {
          best = chain.value();
          out.best_side = chain.side();
        }
      }
      out.trace.push_back(best);
      temperature *= alpha;
    }
  });

  AnnealReport report;
  double best = -1.0;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    const double v = inst.objective(outcomes[r].best_side);
    if (v > best) {
      best = v;
      report.winning_restart = static_cast<int>(r);
    }
  }
  auto& win = outcomes[static_cast<std::size_t>(report.winning_restart)];
  report.best = inst.to_split(win.best_side);
  report.best.objective_value = best;
  report.best.lambda = 1.0;
  report.best_trace = std::move(win.trace);
  return report;
}

TrapSplit optimize_trap_split(const DatasetManifest& manifest, double test_fraction, int iterations,
                              std::uint64_t seed) {
  AnnealSettings s;
  s.iterations = iterations;
  return anneal_trap_split(manifest, test_fraction, s, seed).best;
}

TrapSplit brute_force_trap_split(const DatasetManifest& manifest, double test_fraction) {
  const Instance inst(manifest);
  if (inst.size() > 12) throw ConfigError("brute force limited to 12 eligible samples");
  const auto n_test = trap_test_counts(manifest, test_fraction);

  std::vector<std::size_t> members[2];
  for (std::size_t i = 0; i < inst.size(); ++i) members[inst.labels[i]].push_back(i);

  auto subsets = [](std::size_t n, std::size_t k) {
    std::vector<std::uint32_t> masks;
    for (std::uint32_t m = 0; m < (1u << n); ++m)
      if (static_cast<std::size_t>(std::popcount(m)) == k) masks.push_back(m);
    return masks;
  };
  const auto masks0 = subsets(members[0].size(), n_test[0]);
  const auto masks1 = subsets(members[1].size(), n_test[1]);

  std::vector<std::uint8_t> side(inst.size()), best_side;
  double best = -1.0;
  for (auto m0 : masks0)
    for (auto m1 : masks1) {
      for (std::size_t k = 0; k < members[0].size(); ++k) side[members[0][k]] = (m0 >> k) & 1u;
      for (std::size_t k = 0; k < members[1].size(); ++k) side[members[1][k]] = (m1 >> k) & 1u;
      const double v = inst.objective(side);
      if (v > best) {
        best = v;
        best_side = side;
      }
    }
  auto s = inst.to_split(best_side);
  s.objective_value = best;
  s.lambda = 1.0;
  return s;
}

TrapSplit interpolate_split(const TrapSplit& random_split, const TrapSplit& trap_split, double lambda,
                            const DatasetManifest& manifest, std::uint64_t seed) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0,1]");
  const Instance inst(manifest);
  std::vector<std::uint8_t> rs, ts;
  try {
    rs = inst.sides(random_split);
    ts = inst.sides(trap_split);
  } catch (const DataError& e) {
    throw DataError(std::string("incompatible splits: ") + e.what());
  }

  // to_test[c]: random-train but trap-test; to_train[c]: the reverse.
  std::vector<std::size_t> to_test[2], to_train[2];
  for (std::size_t i = 0; i < inst.size(); ++i) {
    if (rs[i] == ts[i]) continue;
    (ts[i] ? to_test : to_train)[inst.labels[i]].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    if (to_test[c].size() != to_train[c].size())
      throw DataError("incompatible splits: class proportions differ");

  const std::size_t pairs = to_test[0].size() + to_test[1].size();
  const auto target = static_cast<std::size_t>(std::floor(lambda * static_cast<double>(pairs) + 0.5));
  // Largest-remainder allocation of `target` pairs across classes.
  std::array<std::size_t, 2> take{};
  std::array<double, 2> rem{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    const double exact = lambda * static_cast<double>(to_test[c].size());
    take[c] = std::min(to_test[c].size(), static_cast<std::size_t>(std::floor(exact)));
    rem[c] = exact - std::floor(exact);
    assigned += take[c];
  }
  while (assigned < target) {
    std::size_t c = (rem[1] > rem[0]) ? 1 : 0;
    if (take[c] == to_test[c].size()) c = 1 - c;
    ++take[c];
    rem[c] = -1.0;
    ++assigned;
  }
  while (assigned > target) {  // guards floating-point overshoot
    const std::size_t c = take[1] > 0 ? 1 : 0;
    --take[c];
    --assigned;
  }

  std::vector<std::uint8_t> side = rs;
  for (int c = 0; c < 2; ++c) {
    Rng rng(stable_hash(seed, "interpolate", c));
    rng.shuffle(std::span(to_test[c]));
    rng.shuffle(std::span(to_train[c]));
    for (std::size_t k = 0; k < take[static_cast<std::size_t>(c)]; ++k) {
      side[to_test[c][k]] = 1;
      side[to_train[c][k]] = 0;
    }
  }
  auto s = inst.to_split(side);
  s.objective_value = inst.objective(side);
  s.lambda = lambda;
  return s;
}

DatasetManifest stamp_split(const DatasetManifest& manifest, const TrapSplit& split) {
  const std::set<std::string> train(split.train_ids.begin(), split.train_ids.end());
  const std::set<std::string> test(split.test_ids.begin(), split.test_ids.end());
  std::vector<SampleRecord> recs;
  for (const auto& r : manifest.records) {
    if (train.count(r.sample_id)) {
      recs.push_back(r);
      recs.back().split_tag = SplitTag::Train;
    } else if (test.count(r.sample_id)) {
      recs.push_back(r);
      recs.back().split_tag = SplitTag::Test;
    }
  }
  return manifest.with_records(std::move(recs));
}

}  // namespace shiftbench
