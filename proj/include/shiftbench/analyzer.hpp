#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftbench/injector.hpp"

namespace shiftbench {

inline constexpr const char* kInDistribution = "in-distribution";

struct RunRecord {
  std::string experiment_id;
  Scenario scenario = Scenario::SameSame;
  std::string shift_set;
  double training_bias = 0.0;  // normalized to [0,1]
  int replica = 0;
  std::string metric_name;
  double value = 0.0;

  bool operator==(const RunRecord&) const = default;
};

std::string results_header();
std::string to_csv_row(const RunRecord& r);
std::string results_to_csv(const std::vector<RunRecord>& records);
std::vector<RunRecord> parse_results_csv(const std::filesystem::path& path);

// Canonical record order: experiment, metric, shift set, scenario, bias, replica.
void sort_records(std::vector<RunRecord>& records);

// ln(p'/(1-p')) with p' = clamp(p, eps, 1-eps).
template <typename Scalar>
Scalar logit(Scalar p, Scalar eps = Scalar(1e-6)) {
  using std::log;
  const Scalar q = std::clamp(p, eps, Scalar(1) - eps);
  return log(q / (Scalar(1) - q));
}

template <typename Scalar>
Scalar inverse_logit(Scalar z) {
  using std::exp;
  return Scalar(1) / (Scalar(1) + exp(-z));
}

template <typename Scalar>
struct LineFit {
  Scalar slope = 0;
  Scalar intercept = 0;
  Scalar r_squared = 0;
};

// Ordinary least squares y ~ a + b x from centered sums. r^2 is 1 for a
// perfect fit of constant data.
template <typename Scalar>
LineFit<Scalar> fit_line(std::span<const Scalar> x, std::span<const Scalar> y) {
  const auto n = static_cast<Scalar>(x.size());
  Scalar mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  Scalar sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Scalar dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  LineFit<Scalar> f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  Scalar ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Scalar r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  if (syy > Scalar(0)) f.r_squared = std::clamp(Scalar(1) - ss_res / syy, Scalar(0), Scalar(1));
  else f.r_squared = Scalar(1);
  return f;
}

struct CurveKey {
  std::string experiment_id;
  Scenario scenario = Scenario::SameSame;
  std::string shift_set;
  std::string metric_name;

  auto operator<=>(const CurveKey&) const = default;
};

struct AggregatePoint {
  CurveKey key;
  double training_bias = 0.0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single replica
  int count = 0;
  bool uneven_replicas = false;  // count differs from the curve's largest group
};

// Per (experiment, scenario, shift set, metric, bias) replica statistics.
std::vector<AggregatePoint> aggregate_replicas(const std::vector<RunRecord>& records);

struct RegressionFit {
  CurveKey key;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int n_points = 0;
};

struct BiasPoint {
  double training_bias;
  double value;
};

// OLS of logit(value) on training bias.
RegressionFit fit_performance_curve(std::span<const BiasPoint> points, CurveKey key = {});

struct CoefficientTable {
  std::vector<std::string> shift_sets;                   // one row each
  std::vector<std::array<std::optional<double>, 4>> slopes;  // columns in kAllScenarios order
};

CoefficientTable angular_coefficient_table(const std::vector<RegressionFit>& fits);
std::string render_table(const CoefficientTable& table);

// |shifted slope| / |iid slope|; empty when |iid slope| < 1e-9.
std::optional<double> attenuation_ratio(const RegressionFit& iid_fit, const RegressionFit& shifted_fit);

struct SlopeInterval {
  double slope = 0.0;  // per-replica fit on the full data
  double low = 0.0;
  double high = 0.0;
  int resamples = 0;
};

// Per-replica logit fit with a percentile bootstrap that resamples replicas
// with replacement inside each bias level.
SlopeInterval bootstrap_slope_interval(std::span<const BiasPoint> replica_points, int resamples,
                                       std::uint64_t seed, double level = 0.95);

struct AttenuationRow {
  std::string experiment_id;
  Scenario scenario = Scenario::SameSame;
  std::string metric_name;
  std::string shift_set;
  std::optional<double> ratio;
};

struct ConfidenceRow {
  CurveKey key;
  SlopeInterval interval;
};

struct AnalysisOptions {
  std::vector<double> excluded_biases;  // control endpoints kept out of the fits
  int bootstrap_resamples = 1000;
  std::uint64_t seed = 0;
};

struct AnalysisResult {
  std::vector<AggregatePoint> points;
  std::vector<RegressionFit> fits;
  std::vector<AttenuationRow> attenuation;
  std::vector<ConfidenceRow> confidence;
};

AnalysisResult analyze(const std::vector<RunRecord>& records, const AnalysisOptions& options);

std::string coefficients_to_csv(const std::vector<RegressionFit>& fits);
std::vector<RegressionFit> parse_coefficients_csv(const std::filesystem::path& path);
std::string attenuation_to_csv(const std::vector<AttenuationRow>& rows);
std::string confidence_to_csv(const std::vector<ConfidenceRow>& rows);
std::string aggregates_to_csv(const std::vector<AggregatePoint>& points);

}  // namespace shiftbench
