#include "shiftbench/metrics.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "shiftbench/errors.hpp"

namespace shiftbench {

namespace {

std::array<std::uint64_t, 2> count_classes(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  std::array<std::uint64_t, 2> n{0, 0};
  for (double l : labels) {
    if (l != 0.0 && l != 1.0) throw DataError("labels must be 0 or 1");
    ++n[l == 1.0];
  }
  if (n[0] == 0 || n[1] == 0) throw DataError("metric requires both classes to be present");
  return n;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const double> labels) {
  const auto n = count_classes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the number of (pos, neg) pairs won by the positive, ties counting one.
  std::uint64_t doubled = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1.0 ? pos : neg) += 1;
      ++j;
    }
    doubled += 2 * pos * neg_below + pos * neg;
    neg_below += neg;
    i = j;
  }
  return static_cast<double>(doubled) / (2.0 * static_cast<double>(n[1]) * static_cast<double>(n[0]));
}

double balanced_accuracy(std::span<const double> scores, std::span<const double> labels, double threshold) {
  const auto n = count_classes(scores, labels);
  std::array<std::uint64_t, 2> correct{0, 0};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted_positive = scores[i] >= threshold;
    const bool positive = labels[i] == 1.0;
    if (predicted_positive == positive) ++correct[positive];
  }
  return 0.5 * (static_cast<double>(correct[0]) / static_cast<double>(n[0]) +
                static_cast<double>(correct[1]) / static_cast<double>(n[1]));
}

}  // namespace shiftbench
