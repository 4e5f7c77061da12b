#pragma once

#include <string>
#include <utility>
#include <vector>

#include "shiftbench/features.hpp"
#include "shiftbench/model.hpp"

namespace shiftbench {

struct TrainingLog {
  std::vector<double> train_loss;  // full training-set loss after each epoch
  std::vector<double> val_auc;     // validation AUC after each epoch
};

// Minibatch gradient descent on L2-regularized cross-entropy. The returned
// parameters are those of the epoch with the highest validation AUC (the
// earliest on ties). Only train and val data are visible here.
TrainedModel train(const FeatureSet& train_set, const FeatureSet& val_set, const ModelSpec& spec,
                   TrainingLog* log = nullptr);

TrainedModel train(const DatasetManifest& train_manifest, const DatasetManifest& val_manifest,
                   const ModelSpec& spec, const ImageLoader& load = load_from_disk);

// Sigmoid class-1 scores, one per column of X.
Eigen::VectorXd predict_scores(const TrainedModel& model, const Eigen::MatrixXd& X);

std::vector<std::pair<std::string, double>> predict_scores(const TrainedModel& model,
                                                           const DatasetManifest& manifest,
                                                           const ImageLoader& load = load_from_disk);

std::string scores_to_csv(const std::vector<std::pair<std::string, double>>& scores);

}  // namespace shiftbench
