#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <json.hpp>

namespace shiftbench {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

enum class ModelKind { Logistic, Mlp };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);

struct ModelSpec {
  ModelKind kind = ModelKind::Logistic;
  int input_side = 32;
  int hidden_units = 64;
  double learning_rate = 0.05;
  int batch_size = 32;
  int max_epochs = 30;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  bool operator==(const ModelSpec&) const = default;
};

nlohmann::ordered_json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j, const ModelSpec& defaults = {});

// Layout of the flat parameter vector.
//   logistic: [w (d), b]
//   mlp:      [W1 (h x d, column-major), b1 (h), w2 (h), b2]; tanh hidden layer
struct ModelShape {
  ModelKind kind = ModelKind::Logistic;
  Eigen::Index input_dim = 0;
  Eigen::Index hidden = 0;

  Eigen::Index parameter_count() const {
    return kind == ModelKind::Logistic ? input_dim + 1 : hidden * input_dim + 2 * hidden + 1;
  }
};

// log(1 + exp(z)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar z) {
  using std::exp;
  using std::log1p;
  return z > Scalar(0) ? z + log1p(exp(-z)) : log1p(exp(z));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  using std::exp;
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-z));
  const Scalar e = exp(z);
  return e / (Scalar(1) + e);
}

// Class-1 logits for every column of X.
template <typename Scalar>
RowVectorX<Scalar> forward(const ModelShape& shape, const Eigen::Ref<const VectorX<Scalar>>& params,
                           const Eigen::Ref<const MatrixX<Scalar>>& X) {
  const Eigen::Index d = shape.input_dim;
  if (shape.kind == ModelKind::Logistic) {
    RowVectorX<Scalar> z = params.head(d).transpose() * X;
    z.array() += params(d);
    return z;
  }
  const Eigen::Index h = shape.hidden;
  const Eigen::Map<const MatrixX<Scalar>> w1(params.data(), h, d);
  const auto b1 = params.segment(h * d, h);
  const auto w2 = params.segment(h * d + h, h);
  const Scalar b2 = params(h * d + 2 * h);
  const MatrixX<Scalar> hidden = ((w1 * X).colwise() + b1).array().tanh().matrix();
  RowVectorX<Scalar> z = w2.transpose() * hidden;
  z.array() += b2;
  return z;
}

// Mean binary cross-entropy over the columns of X plus
// weight_decay/2 * ||weights||^2 (biases excluded). Writes the gradient
// into *grad when non-null.
template <typename Scalar>
Scalar loss_and_gradient(const ModelShape& shape, const Eigen::Ref<const VectorX<Scalar>>& params,
                         const Eigen::Ref<const MatrixX<Scalar>>& X,
                         const Eigen::Ref<const VectorX<Scalar>>& y, Scalar weight_decay,
                         VectorX<Scalar>* grad) {
  const Eigen::Index d = shape.input_dim;
  const Eigen::Index m = X.cols();
  const Scalar inv_m = Scalar(1) / static_cast<Scalar>(m);

  MatrixX<Scalar> hidden;
  RowVectorX<Scalar> z;
  if (shape.kind == ModelKind::Logistic) {
    z = forward<Scalar>(shape, params, X);
  } else {
    const Eigen::Index h = shape.hidden;
    const Eigen::Map<const MatrixX<Scalar>> w1(params.data(), h, d);
    hidden = ((w1 * X).colwise() + params.segment(h * d, h)).array().tanh().matrix();
    z = params.segment(h * d + h, h).transpose() * hidden;
    z.array() += params(h * d + 2 * h);
  }

  Scalar loss(0);
  RowVectorX<Scalar> dz(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    loss += softplus(z(i)) - y(i) * z(i);
    dz(i) = (sigmoid(z(i)) - y(i)) * inv_m;
  }
  loss *= inv_m;

  if (shape.kind == ModelKind::Logistic) {
    loss += Scalar(0.5) * weight_decay * params.head(d).squaredNorm();
    if (grad) {
      grad->resize(params.size());
      grad->head(d) = X * dz.transpose() + weight_decay * params.head(d);
      (*grad)(d) = dz.sum();
    }
    return loss;
  }

  const Eigen::Index h = shape.hidden;
  const Eigen::Map<const MatrixX<Scalar>> w1(params.data(), h, d);
  const auto w2 = params.segment(h * d + h, h);
  loss += Scalar(0.5) * weight_decay * (w1.squaredNorm() + w2.squaredNorm());
  if (grad) {
    grad->resize(params.size());
    const MatrixX<Scalar> dh =
        ((w2 * dz).array() * (Scalar(1) - hidden.array().square())).matrix();
    Eigen::Map<MatrixX<Scalar>> gw1(grad->data(), h, d);
    gw1 = dh * X.transpose() + weight_decay * w1;
    grad->segment(h * d, h) = dh.rowwise().sum();
    grad->segment(h * d + h, h) = hidden * dz.transpose() + weight_decay * w2;
    (*grad)(h * d + 2 * h) = dz.sum();
  }
  return loss;
}

struct TrainedModel {
  ModelSpec spec;
  ModelShape shape;
  Eigen::VectorXd parameters;
  int selected_epoch = 0;
  double val_metric = 0.0;
};

// Single file: one line of JSON header, then parameter_count little-endian
// IEEE-754 doubles.
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace shiftbench
