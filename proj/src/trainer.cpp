#include "shiftbench/trainer.hpp"

#include <numeric>

#include "shiftbench/csv.hpp"
#include "shiftbench/errors.hpp"
#include "shiftbench/metrics.hpp"
#include "shiftbench/rng.hpp"
#include "shiftbench/stable_hash.hpp"

namespace shiftbench {

namespace {

void require_binary(const FeatureSet& s, const char* what) {
  if (s.size() == 0) throw DataError(std::string(what) + " set is empty");
  const double positives = s.y.sum();
  if (positives == 0.0 || positives == static_cast<double>(s.size()))
    throw DataError(std::string(what) + " set contains a single class");
}

Eigen::VectorXd initial_parameters(const ModelShape& shape, std::uint64_t seed) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(shape.parameter_count());
  if (shape.kind == ModelKind::Mlp) {
    Rng rng(stable_hash(seed, "init"));
    const Eigen::Index d = shape.input_dim, h = shape.hidden;
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
    for (Eigen::Index i = 0; i < h * d; ++i) p(i) = s1 * rng.normal();
    for (Eigen::Index i = 0; i < h; ++i) p(h * d + h + i) = s2 * rng.normal();
  }
  return p;
}

// Parameters trained on x - mu expressed on raw x: the first layer absorbs
// the shift into its (unregularized) bias.
Eigen::VectorXd fold_centering(const ModelShape& shape, Eigen::VectorXd p, const Eigen::VectorXd& mu) {
  const Eigen::Index d = shape.input_dim;
  if (shape.kind == ModelKind::Logistic) {
    p(d) -= p.head(d).dot(mu);
  } else {
    const Eigen::Index h = shape.hidden;
    const Eigen::Map<const Eigen::MatrixXd> w1(p.data(), h, d);
    const Eigen::VectorXd shift = w1 * mu;
    p.segment(h * d, h) -= shift;
  }
  return p;
}

}  // namespace

TrainedModel train(const FeatureSet& train_set, const FeatureSet& val_set, const ModelSpec& spec,
                   TrainingLog* log) {
  spec.validate();
  require_binary(train_set, "training");
  require_binary(val_set, "validation");
  if (train_set.X.rows() != val_set.X.rows())
    throw DataError("train and validation feature sizes differ");

  ModelShape shape{spec.kind, train_set.X.rows(), spec.kind == ModelKind::Mlp ? spec.hidden_units : 0};
  // SGD runs on mean-centered features; raw [0,1] features share a large
  // common mode that makes the loss badly conditioned at useful step sizes.
  const Eigen::VectorXd mu = train_set.X.rowwise().mean();
  const Eigen::MatrixXd train_x = train_set.X.colwise() - mu;
  const Eigen::MatrixXd val_x = val_set.X.colwise() - mu;
  Eigen::VectorXd params = initial_parameters(shape, spec.seed);

  TrainedModel best{spec, shape, params, 0, -1.0};
  const auto n = static_cast<std::size_t>(train_set.size());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::VectorXd grad;
  Eigen::MatrixXd xb;
  Eigen::VectorXd yb;

  for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    Rng rng(stable_hash(spec.seed, "epoch", epoch));
    rng.shuffle(std::span(order));
    int batch = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(spec.batch_size), ++batch) {
      const auto m = std::min(n - start, static_cast<std::size_t>(spec.batch_size));
      xb.resize(train_set.X.rows(), static_cast<Eigen::Index>(m));
      yb.resize(static_cast<Eigen::Index>(m));
      for (std::size_t k = 0; k < m; ++k) {
        xb.col(static_cast<Eigen::Index>(k)) = train_x.col(order[start + k]);
        yb(static_cast<Eigen::Index>(k)) = train_set.y(order[start + k]);
      }
      const double loss = loss_and_gradient<double>(shape, params, xb, yb, spec.weight_decay, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch));
      params -= spec.learning_rate * grad;
    }

    const Eigen::VectorXd val_scores = forward<double>(shape, params, val_x).transpose().unaryExpr(
        [](double z) { return sigmoid(z); });
    const double val_auc = auc(std::span(val_scores.data(), static_cast<std::size_t>(val_scores.size())),
                               std::span(val_set.y.data(), static_cast<std::size_t>(val_set.y.size())));
    if (log) {
      log->train_loss.push_back(
          loss_and_gradient<double>(shape, params, train_x, train_set.y, spec.weight_decay, nullptr));
      log->val_auc.push_back(val_auc);
    }
    if (val_auc > best.val_metric) {
      best.parameters = params;
      best.selected_epoch = epoch;
      best.val_metric = val_auc;
    }
  }
  best.parameters = fold_centering(shape, std::move(best.parameters), mu);
  return best;
}

TrainedModel train(const DatasetManifest& train_manifest, const DatasetManifest& val_manifest,
                   const ModelSpec& spec, const ImageLoader& load) {
  spec.validate();
  return train(featurize_manifest(train_manifest, spec.input_side, load),
               featurize_manifest(val_manifest, spec.input_side, load), spec);
}

Eigen::VectorXd predict_scores(const TrainedModel& model, const Eigen::MatrixXd& X) {
  if (X.rows() != model.shape.input_dim)
    throw DataError("feature size " + std::to_string(X.rows()) + " does not match model input " +
                    std::to_string(model.shape.input_dim));
  return forward<double>(model.shape, model.parameters, X).transpose().unaryExpr(
      [](double z) { return sigmoid(z); });
}

std::vector<std::pair<std::string, double>> predict_scores(const TrainedModel& model,
                                                           const DatasetManifest& manifest,
                                                           const ImageLoader& load) {
  const auto fs = featurize_manifest(manifest, model.spec.input_side, load);
  const auto scores = predict_scores(model, fs.X);
  std::vector<std::pair<std::string, double>> out;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    out.emplace_back(fs.ids[static_cast<std::size_t>(i)], scores(i));
  return out;
}

std::string scores_to_csv(const std::vector<std::pair<std::string, double>>& scores) {
  std::string out = "sample_id,score\n";
  for (const auto& [id, s] : scores) out += csv::escape(id) + "," + csv::format_double(s) + "\n";
  return out;
}

}  // namespace shiftbench
