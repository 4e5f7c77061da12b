#pragma once

#include <span>

namespace shiftbench {

// Mann-Whitney AUC: P(score+ > score-) + 0.5 P(tie), computed exactly from
// integer pair counts. Labels are 0/1; both classes must be present.
double auc(std::span<const double> scores, std::span<const double> labels);

// Mean of per-class accuracies; a score equal to the threshold predicts class 1.
double balanced_accuracy(std::span<const double> scores, std::span<const double> labels,
                         double threshold = 0.5);

}  // namespace shiftbench
