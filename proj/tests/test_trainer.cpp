#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "shiftbench/errors.hpp"
#include "shiftbench/features.hpp"
#include "shiftbench/metrics.hpp"
#include "shiftbench/model.hpp"
#include "shiftbench/rng.hpp"
#include "shiftbench/trainer.hpp"
#include "support.hpp"

using namespace shiftbench;

namespace {

double auc_of(const std::vector<double>& s, const std::vector<double>& y) { return auc(s, y); }

// O(n^2) pairwise Mann-Whitney oracle.
double pairwise_auc(const std::vector<double>& s, const std::vector<double>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

// Two Gaussian blobs in d dimensions.
FeatureSet blobs(int n, int d, double gap, std::uint64_t seed) {
  Rng rng(seed);
  FeatureSet fs;
  fs.X.resize(d, n);
  fs.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    fs.y(i) = label;
    for (int k = 0; k < d; ++k) fs.X(k, i) = rng.normal() + (label ? gap : 0.0) * (k == 0 ? 1.0 : 0.3);
    fs.ids.push_back("b" + std::to_string(i));
  }
  return fs;
}

}  // namespace

TEST_CASE("auc examples") {
  CHECK(auc_of({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auc_of({0.5, 0.5}, {0, 1}) == 0.5);
  CHECK(auc_of({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK_THROWS_AS(auc_of({0.1, 0.2}, {1, 1}), DataError);
  CHECK_THROWS_AS(auc_of({0.1, 0.2}, {0, 2}), DataError);
}

TEST_CASE("auc equals the pairwise oracle exactly") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::vector<double> s, y;
    for (int i = 0; i < 200; ++i) {
      // coarse scores force plenty of ties
      s.push_back(std::floor(rng.uniform() * 20) / 20);
      y.push_back(i < 2 ? i : static_cast<double>(rng.below(2)));
    }
    REQUIRE(auc_of(s, y) == pairwise_auc(s, y));
  }
}

TEST_CASE("auc is invariant under increasing transforms") {
  Rng rng(3);
  std::vector<double> s, t, y;
  for (int i = 0; i < 300; ++i) {
    s.push_back(rng.uniform());
    t.push_back(std::exp(3 * s.back()) - 7);
    y.push_back(i % 3 == 0);
  }
  CHECK(auc_of(s, y) == auc_of(t, y));
}

TEST_CASE("balanced accuracy examples") {
  std::vector<double> y{0, 0, 1, 1};
  CHECK(balanced_accuracy(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y) == 1.0);
  CHECK(balanced_accuracy(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
  CHECK(balanced_accuracy(std::vector<double>{0.1, 0.1, 0.9, 0.9}, std::vector<double>{0, 0, 0, 1}) ==
        Catch::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK_THROWS_AS(balanced_accuracy(std::vector<double>{0.5}, std::vector<double>{1}), DataError);
}

TEST_CASE("featurize") {
  SECTION("uniform gray") {
    const RgbImage gray(64, 64, {128, 128, 128});
    const auto v = featurize(gray, 32);
    CHECK(v.size() == 3 * 32 * 32);
    CHECK((v.array() - 0.5).abs().maxCoeff() <= 1.0 / 255.0);
  }
  SECTION("2x2 block-constant image downsamples exactly") {
    RgbImage img(8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        img.set(x, y, {static_cast<std::uint8_t>(10 * (x / 2) + 40 * (y / 2)), static_cast<std::uint8_t>(x / 2), 255});
    const auto v = featurize(img, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        const auto i = (y * 4 + x) * 3;
        CHECK(v(i) == Catch::Approx((10.0 * x + 40.0 * y) / 255.0).margin(1e-12));
        CHECK(v(i + 1) == Catch::Approx(x / 255.0).margin(1e-12));
        CHECK(v(i + 2) == Catch::Approx(1.0).margin(1e-12));
      }
  }
  SECTION("non-integer ratio preserves the mean") {
    RgbImage img(10, 10);
    Rng rng(1);
    double sum = 0;
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) {
        const auto g = static_cast<std::uint8_t>(rng.below(256));
        sum += g;
        img.set(x, y, {g, g, g});
      }
    const auto v = featurize(img, 4);
    CHECK(v.mean() == Catch::Approx(sum / 100.0 / 255.0).epsilon(1e-12));
  }
  SECTION("invalid input side") { CHECK_THROWS_AS(featurize(RgbImage(8, 8), 9), ConfigError); }
}

TEST_CASE("analytic gradients match central finite differences") {
  const double h = 1e-4;
  auto check = [&](const ModelShape& shape, std::uint64_t seed) {
    const auto data = blobs(12, static_cast<int>(shape.input_dim), 1.0, seed);
    Rng rng(seed + 1);
    Eigen::VectorXd p(shape.parameter_count());
    for (auto& v : p) v = 0.5 * rng.normal();
    Eigen::VectorXd grad;
    loss_and_gradient<double>(shape, p, data.X, data.y, 0.01, &grad);
    double worst = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      Eigen::VectorXd a = p, b = p;
      a(i) += h;
      b(i) -= h;
      const double fd = (loss_and_gradient<double>(shape, a, data.X, data.y, 0.01, nullptr) -
                         loss_and_gradient<double>(shape, b, data.X, data.y, 0.01, nullptr)) /
                        (2 * h);
      worst = std::max(worst, std::abs(fd - grad(i)));
    }
    return worst;
  };
  CHECK(check({ModelKind::Logistic, 9, 0}, 1) <= 1e-5);  // 10 parameters
  CHECK(check({ModelKind::Mlp, 3, 2}, 2) <= 1e-5);       // 11 parameters
  CHECK(check({ModelKind::Mlp, 6, 5}, 3) <= 1e-5);
}

TEST_CASE("softplus and sigmoid stay finite at the extremes") {
  CHECK(softplus(800.0) == Catch::Approx(800.0));
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(sigmoid(-800.0) == 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("training is reproducible and selects by validation auc") {
  const auto train_set = blobs(200, 8, 1.5, 4), val_set = blobs(100, 8, 1.5, 5);
  ModelSpec spec;
  spec.max_epochs = 8;
  spec.seed = 10;
  TrainingLog log;
  const auto a = train(train_set, val_set, spec, &log);
  const auto b = train(train_set, val_set, spec);
  CHECK(a.parameters == b.parameters);
  REQUIRE(log.val_auc.size() == 8);
  const auto best = std::max_element(log.val_auc.begin(), log.val_auc.end());
  CHECK(a.selected_epoch == static_cast<int>(best - log.val_auc.begin()) + 1);  // earliest maximum
  CHECK(a.val_metric == *best);

  spec.kind = ModelKind::Mlp;
  spec.hidden_units = 6;
  const auto m1 = train(train_set, val_set, spec);
  CHECK(m1.parameters == train(train_set, val_set, spec).parameters);
  CHECK(m1.parameters.allFinite());
  spec.seed = 11;
  CHECK(m1.parameters != train(train_set, val_set, spec).parameters);
}

TEST_CASE("logistic training loss is non-increasing at a small learning rate") {
  const auto train_set = blobs(256, 10, 1.0, 6), val_set = blobs(64, 10, 1.0, 7);
  ModelSpec spec;
  spec.learning_rate = 1e-3;
  spec.max_epochs = 25;
  TrainingLog log;
  train(train_set, val_set, spec, &log);
  for (std::size_t e = 1; e < log.train_loss.size(); ++e) REQUIRE(log.train_loss[e] <= log.train_loss[e - 1]);
}

TEST_CASE("training errors") {
  auto one_class = blobs(20, 3, 1.0, 1);
  one_class.y.setZero();
  const auto ok = blobs(20, 3, 1.0, 2);
  CHECK_THROWS_AS(train(one_class, ok, ModelSpec{}), DataError);
  CHECK_THROWS_AS(train(ok, one_class, ModelSpec{}), DataError);

  auto broken = blobs(20, 3, 1.0, 3);
  broken.X.setConstant(std::numeric_limits<double>::quiet_NaN());
  ModelSpec spec;
  CHECK_THROWS_AS(train(broken, ok, spec), NumericError);
  CHECK_THROWS_WITH(train(broken, ok, spec), Catch::Matchers::ContainsSubstring("non-finite loss at epoch 1, batch 0"));

  spec = ModelSpec{};
  spec.batch_size = 0;
  CHECK_THROWS_AS(train(ok, ok, spec), ConfigError);
}

TEST_CASE("prediction") {
  TrainedModel zero;
  zero.shape = {ModelKind::Logistic, 3 * 4 * 4, 0};
  zero.spec.input_side = 4;
  zero.parameters = Eigen::VectorXd::Zero(zero.shape.parameter_count());
  const auto X = blobs(10, 48, 1.0, 1).X;
  CHECK((predict_scores(zero, X).array() == 0.5).all());

  TrainedModel strong = zero;
  strong.parameters.setConstant(50.0);
  const Eigen::MatrixXd white = Eigen::MatrixXd::Ones(48, 3);
  const auto s = predict_scores(strong, white);
  CHECK(s.allFinite());
  CHECK((s.array() >= 0.0).all());
  CHECK((s.array() <= 1.0).all());

  CHECK_THROWS_AS(predict_scores(zero, Eigen::MatrixXd::Zero(5, 2)), DataError);
}

TEST_CASE("manifest scoring is keyed by sample id") {
  testing::TempDir dir("scores");
  DatasetManifest m;
  m.root = dir.path();
  for (int i = 0; i < 6; ++i) {
    auto r = testing::record("s" + std::to_string(i), i % 2);
    write_png(m.image_file(r), RgbImage(8, 8, {static_cast<std::uint8_t>(40 * i), 0, 0}));
    m.records.push_back(r);
  }
  m.normalize();
  TrainedModel model;
  model.spec.input_side = 4;
  model.shape = {ModelKind::Logistic, 48, 0};
  model.parameters = Eigen::VectorXd::LinSpaced(49, -1.0, 1.0);
  const auto forward_scores = predict_scores(model, m);
  auto reversed = m;
  std::reverse(reversed.records.begin(), reversed.records.end());
  const auto backward_scores = predict_scores(model, reversed);
  std::map<std::string, double> a(forward_scores.begin(), forward_scores.end()),
      b(backward_scores.begin(), backward_scores.end());
  CHECK(a == b);
  CHECK(forward_scores.front().first == m.records.front().sample_id);
  CHECK(scores_to_csv(forward_scores).starts_with("sample_id,score\n"));
}

TEST_CASE("model file round trip") {
  testing::TempDir dir("model");
  const auto model = train(blobs(60, 5, 1.0, 1), blobs(30, 5, 1.0, 2), ModelSpec{});
  save_model(model, dir / "m.model");
  const auto back = load_model(dir / "m.model");
  CHECK(back.parameters == model.parameters);
  CHECK(back.spec == model.spec);
  CHECK(back.selected_epoch == model.selected_epoch);
  CHECK(back.val_metric == model.val_metric);
  save_model(back, dir / "m2.model");
  CHECK(testing::slurp(dir / "m.model") == testing::slurp(dir / "m2.model"));
  testing::spit(dir / "bad.model", "{\"format\":\"other\"}\n");
  CHECK_THROWS_AS(load_model(dir / "bad.model"), DataError);
}

TEST_CASE("returned parameters act on raw features and stay calibrated") {
  // Positive-offset features with a strong common mode, like flattened images.
  auto train_set = blobs(400, 300, 0.8, 31);
  auto val_set = blobs(200, 300, 0.8, 32);
  train_set.X.array() = 0.5 + 0.1 * train_set.X.array();
  val_set.X.array() = 0.5 + 0.1 * val_set.X.array();
  for (auto kind : {ModelKind::Logistic, ModelKind::Mlp}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.hidden_units = 8;
    spec.max_epochs = 10;
    spec.seed = 5;
    const auto model = train(train_set, val_set, spec);
    const Eigen::VectorXd s = predict_scores(model, val_set.X);
    const std::span<const double> ss(s.data(), static_cast<std::size_t>(s.size()));
    const std::span<const double> ys(val_set.y.data(), static_cast<std::size_t>(val_set.y.size()));
    CHECK(auc(ss, ys) == Catch::Approx(model.val_metric).margin(1e-12));
    CHECK(model.val_metric > 0.8);
    CHECK(balanced_accuracy(ss, ys) > 0.7);
  }
}
