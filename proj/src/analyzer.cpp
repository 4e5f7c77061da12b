#include "shiftbench/analyzer.hpp"

#include <map>
#include <set>
#include <sstream>

#include "shiftbench/csv.hpp"
#include "shiftbench/errors.hpp"
#include "shiftbench/rng.hpp"
#include "shiftbench/stable_hash.hpp"

namespace shiftbench {

namespace {

int shift_rank(const std::string& s) { return s == kInDistribution ? 0 : 1; }

bool shift_less(const std::string& a, const std::string& b) {
  if (shift_rank(a) != shift_rank(b)) return shift_rank(a) < shift_rank(b);
  return a < b;
}

// Canonical curve ordering used for every output table.
bool key_less(const CurveKey& a, const CurveKey& b) {
  if (a.experiment_id != b.experiment_id) return a.experiment_id < b.experiment_id;
  if (a.metric_name != b.metric_name) return a.metric_name < b.metric_name;
  if (a.shift_set != b.shift_set) return shift_less(a.shift_set, b.shift_set);
  return a.scenario < b.scenario;
}

CurveKey key_of(const RunRecord& r) { return {r.experiment_id, r.scenario, r.shift_set, r.metric_name}; }

struct KeyLess {
  bool operator()(const CurveKey& a, const CurveKey& b) const { return key_less(a, b); }
};

double quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
}

std::string opt_to_string(const std::optional<double>& v) {
  return v ? csv::format_double(*v) : "undefined";
}

}  // namespace

std::string results_header() {
  return "experiment_id,scenario,shift_set,training_bias,replica,metric_name,value";
}

std::string to_csv_row(const RunRecord& r) {
  return csv::join({r.experiment_id, std::string(to_string(r.scenario)), r.shift_set,
                    csv::format_double(r.training_bias), std::to_string(r.replica), r.metric_name,
                    csv::format_double(r.value)});
}

std::string results_to_csv(const std::vector<RunRecord>& records) {
  std::string out = results_header() + "\n";
  for (const auto& r : records) out += to_csv_row(r) + "\n";
  return out;
}

std::vector<RunRecord> parse_results_csv(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || csv::join(rows.front()) != results_header())
    throw DataError(path.string() + ": unexpected results header");
  std::vector<RunRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 7)
      throw DataError(path.string() + ": row " + std::to_string(i + 1) + " has " +
                      std::to_string(row.size()) + " fields");
    RunRecord r;
    r.experiment_id = row[0];
    r.scenario = parse_scenario(row[1]);
    r.shift_set = row[2];
    r.training_bias = csv::parse_double(row[3]);
    r.replica = static_cast<int>(csv::parse_int(row[4]));
    r.metric_name = row[5];
    r.value = csv::parse_double(row[6]);
    if (!(r.value >= 0.0 && r.value <= 1.0) || !(r.training_bias >= 0.0 && r.training_bias <= 1.0))
      throw DataError(path.string() + ": row " + std::to_string(i + 1) + " out of range");
    out.push_back(std::move(r));
  }
  return out;
}

void sort_records(std::vector<RunRecord>& records) {
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    const auto ka = key_of(a), kb = key_of(b);
    if (key_less(ka, kb)) return true;
    if (key_less(kb, ka)) return false;
    if (a.training_bias != b.training_bias) return a.training_bias < b.training_bias;
    return a.replica < b.replica;
  });
}

std::vector<AggregatePoint> aggregate_replicas(const std::vector<RunRecord>& records) {
  std::map<CurveKey, std::map<double, std::vector<double>>, KeyLess> groups;
  for (const auto& r : records) groups[key_of(r)][r.training_bias].push_back(r.value);

  std::vector<AggregatePoint> out;
  for (const auto& [key, by_bias] : groups) {
    std::size_t largest = 0;
    for (const auto& [b, values] : by_bias) largest = std::max(largest, values.size());
    for (const auto& [b, values] : by_bias) {
      AggregatePoint p;
      p.key = key;
      p.training_bias = b;
      p.count = static_cast<int>(values.size());
      double sum = 0.0;
      for (double v : values) sum += v;
      p.mean = sum / static_cast<double>(values.size());
      if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - p.mean) * (v - p.mean);
        p.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
      }
      p.uneven_replicas = values.size() != largest;
      out.push_back(std::move(p));
    }
  }
  return out;
}

RegressionFit fit_performance_curve(std::span<const BiasPoint> points, CurveKey key) {
  std::vector<double> x, y;
  for (const auto& p : points) {
    x.push_back(p.training_bias);
    y.push_back(logit(p.value));
  }
  if (std::set<double>(x.begin(), x.end()).size() < 2)
    throw DataError("performance curve needs at least two distinct bias values");
  const auto line = fit_line<double>(x, y);
  return {std::move(key), line.slope, line.intercept, line.r_squared, static_cast<int>(points.size())};
}

CoefficientTable angular_coefficient_table(const std::vector<RegressionFit>& fits) {
  std::set<std::string, decltype(&shift_less)> shift_sets(&shift_less);
  for (const auto& f : fits) shift_sets.insert(f.key.shift_set);
  CoefficientTable t;
  t.shift_sets.assign(shift_sets.begin(), shift_sets.end());
  t.slopes.resize(t.shift_sets.size());
  for (const auto& f : fits) {
    const auto row = static_cast<std::size_t>(
        std::find(t.shift_sets.begin(), t.shift_sets.end(), f.key.shift_set) - t.shift_sets.begin());
    auto& cell = t.slopes[row][static_cast<std::size_t>(f.key.scenario)];
    if (cell)
      throw DataError("duplicate fit for (" + f.key.shift_set + ", " +
                      std::string(to_string(f.key.scenario)) + ")");
    cell = f.slope;
  }
  return t;
}

std::string render_table(const CoefficientTable& t) {
  std::ostringstream os;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  std::size_t first = 9;
  for (const auto& s : t.shift_sets) first = std::max(first, s.size());
  os << pad("shift_set", first + 2);
  for (auto sc : kAllScenarios) os << pad(std::string(to_string(sc)), 22);
  os << "\n";
  for (std::size_t r = 0; r < t.shift_sets.size(); ++r) {
    os << pad(t.shift_sets[r], first + 2);
    for (std::size_t c = 0; c < 4; ++c) {
      const auto& v = t.slopes[r][c];
      char buf[64];
      if (v) std::snprintf(buf, sizeof(buf), "%.2f (%+.4f)", std::fabs(*v), *v);
      else std::snprintf(buf, sizeof(buf), "n/a");
      os << pad(buf, 22);
    }
    os << "\n";
  }
  return os.str();
}

std::optional<double> attenuation_ratio(const RegressionFit& iid_fit, const RegressionFit& shifted_fit) {
  if (iid_fit.key.scenario != shifted_fit.key.scenario)
    throw DataError("attenuation ratio: scenario mismatch");
  if (iid_fit.key.metric_name != shifted_fit.key.metric_name)
    throw DataError("attenuation ratio: metric mismatch");
  if (std::fabs(iid_fit.slope) < 1e-9) return std::nullopt;
  return std::fabs(shifted_fit.slope) / std::fabs(iid_fit.slope);
}

SlopeInterval bootstrap_slope_interval(std::span<const BiasPoint> replica_points, int resamples,
                                       std::uint64_t seed, double level) {
  std::map<double, std::vector<double>> by_bias;
  for (const auto& p : replica_points) by_bias[p.training_bias].push_back(logit(p.value));
  if (by_bias.size() < 2) throw DataError("bootstrap needs at least two distinct bias values");

  std::vector<double> x, y;
  for (const auto& [b, vs] : by_bias)
    for (double v : vs) {
      x.push_back(b);
      y.push_back(v);
    }
  SlopeInterval out;
  out.slope = fit_line<double>(x, y).slope;
  out.resamples = resamples;
  if (resamples <= 0) {
    out.low = out.high = out.slope;
    return out;
  }

  Rng rng(seed);
  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(resamples));
  for (int s = 0; s < resamples; ++s) {
    y.clear();
    for (const auto& [b, vs] : by_bias)
      for (std::size_t k = 0; k < vs.size(); ++k) y.push_back(vs[rng.below(vs.size())]);
    slopes.push_back(fit_line<double>(x, y).slope);
  }
  std::sort(slopes.begin(), slopes.end());
  const double tail = (1.0 - level) / 2.0;
  out.low = quantile(slopes, tail);
  out.high = quantile(slopes, 1.0 - tail);
  return out;
}

AnalysisResult analyze(const std::vector<RunRecord>& input, const AnalysisOptions& options) {
  // Canonical order so floating-point sums and bootstrap draws ignore input order.
  auto records = input;
  sort_records(records);
  AnalysisResult res;
  res.points = aggregate_replicas(records);
  auto excluded = [&](double b) {
    return std::any_of(options.excluded_biases.begin(), options.excluded_biases.end(),
                       [&](double e) { return std::fabs(e - b) < 1e-12; });
  };

  std::map<CurveKey, std::vector<BiasPoint>, KeyLess> means, raw;
  for (const auto& p : res.points)
    if (!excluded(p.training_bias)) means[p.key].push_back({p.training_bias, p.mean});
  for (const auto& r : records)
    if (!excluded(r.training_bias)) raw[key_of(r)].push_back({r.training_bias, r.value});

  for (const auto& [key, pts] : means) {
    std::set<double> distinct;
    for (const auto& p : pts) distinct.insert(p.training_bias);
    if (distinct.size() < 2) continue;
    res.fits.push_back(fit_performance_curve(pts, key));
    const auto& k = key;
    const auto interval = bootstrap_slope_interval(
        raw.at(key), options.bootstrap_resamples,
        stable_hash(options.seed, "bootstrap", k.experiment_id, std::string(to_string(k.scenario)),
                    k.shift_set, k.metric_name));
    res.confidence.push_back({key, interval});
  }

  for (const auto& f : res.fits) {
    if (f.key.shift_set == kInDistribution) continue;
    CurveKey iid_key = f.key;
    iid_key.shift_set = kInDistribution;
    auto it = std::find_if(res.fits.begin(), res.fits.end(), [&](const RegressionFit& g) { return g.key == iid_key; });
    if (it == res.fits.end()) continue;
    res.attenuation.push_back({f.key.experiment_id, f.key.scenario, f.key.metric_name, f.key.shift_set,
                               attenuation_ratio(*it, f)});
  }
  std::stable_sort(res.attenuation.begin(), res.attenuation.end(),
                   [](const AttenuationRow& a, const AttenuationRow& b) {
                     return std::tie(a.experiment_id, a.metric_name, a.scenario, a.shift_set) <
                            std::tie(b.experiment_id, b.metric_name, b.scenario, b.shift_set);
                   });
  return res;
}

std::string coefficients_to_csv(const std::vector<RegressionFit>& fits) {
  std::string out =
      "experiment_id,shift_set,scenario,metric_name,slope,abs_slope,intercept,r_squared,n_points\n";
  for (const auto& f : fits)
    out += csv::join({f.key.experiment_id, f.key.shift_set, std::string(to_string(f.key.scenario)),
                      f.key.metric_name, csv::format_double(f.slope), csv::format_double(std::fabs(f.slope)),
                      csv::format_double(f.intercept), csv::format_double(f.r_squared),
                      std::to_string(f.n_points)}) +
           "\n";
  return out;
}

std::vector<RegressionFit> parse_coefficients_csv(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows.front().size() != 9 || rows.front()[0] != "experiment_id")
    throw DataError(path.string() + ": unexpected coefficients header");
  std::vector<RegressionFit> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != 9) throw DataError(path.string() + ": malformed row " + std::to_string(i + 1));
    RegressionFit f;
    f.key = {row[0], parse_scenario(row[2]), row[1], row[3]};
    f.slope = csv::parse_double(row[4]);
    f.intercept = csv::parse_double(row[6]);
    f.r_squared = csv::parse_double(row[7]);
    f.n_points = static_cast<int>(csv::parse_int(row[8]));
    out.push_back(std::move(f));
  }
  return out;
}

std::string attenuation_to_csv(const std::vector<AttenuationRow>& rows) {
  std::string out = "experiment_id,scenario,metric_name,shift_set,ratio\n";
  for (const auto& r : rows)
    out += csv::join({r.experiment_id, std::string(to_string(r.scenario)), r.metric_name, r.shift_set,
                      opt_to_string(r.ratio)}) +
           "\n";
  return out;
}

std::string confidence_to_csv(const std::vector<ConfidenceRow>& rows) {
  std::string out = "experiment_id,shift_set,scenario,metric_name,replica_slope,ci_low,ci_high,resamples\n";
  for (const auto& r : rows)
    out += csv::join({r.key.experiment_id, r.key.shift_set, std::string(to_string(r.key.scenario)),
                      r.key.metric_name, csv::format_double(r.interval.slope),
                      csv::format_double(r.interval.low), csv::format_double(r.interval.high),
                      std::to_string(r.interval.resamples)}) +
           "\n";
  return out;
}

std::string aggregates_to_csv(const std::vector<AggregatePoint>& points) {
  std::string out = "experiment_id,shift_set,scenario,metric_name,training_bias,mean,sd,count,uneven\n";
  for (const auto& p : points)
    out += csv::join({p.key.experiment_id, p.key.shift_set, std::string(to_string(p.key.scenario)),
                      p.key.metric_name, csv::format_double(p.training_bias), csv::format_double(p.mean),
                      csv::format_double(p.sd), std::to_string(p.count), p.uneven_replicas ? "1" : "0"}) +
           "\n";
  return out;
}

}  // namespace shiftbench
