#include <cmath>

#include "test_util.hpp"
#include "uom/error.hpp"
#include "uom/weights.hpp"

namespace uom {
namespace {

TEST(IdWeights, Examples) {
  const double d35[] = {3.0, 5.0};
  EXPECT_EQ(id_weights(d35).omega, (std::vector<double>{0.75, 1.25}));
  const double equal[] = {4.2, 4.2, 4.2};
  for (double w : id_weights(equal).omega) EXPECT_DOUBLE_EQ(w, 1.0);
}

TEST(IdWeights, SumToLAndScaleInvariant) {
  Rng rng(4);
  std::vector<double> d(17), scaled(17);
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = 0.5 + 30.0 * rng.uniform();
    scaled[i] = 3.7 * d[i];
  }
  const auto w = id_weights(d).omega;
  const auto ws = id_weights(scaled).omega;
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    total += w[i];
    EXPECT_NEAR(w[i], ws[i], 1e-14);
  }
  EXPECT_NEAR(total, 17.0, 1e-12);
}

TEST(IdWeights, RejectsNonPositive) {
  const double bad[] = {3.0, 0.0};
  EXPECT_THROW(id_weights(bad), ArgumentError);
  const double neg[] = {-1.0, 2.0};
  EXPECT_THROW(id_weights(neg), ArgumentError);
}

struct Toy {
  DataMatrix x;
  std::vector<int> y;
};

Toy toy(std::size_t n, std::size_t D, std::size_t L, std::uint64_t seed) {
  Rng rng(seed);
  Toy t{test::gaussian_matrix(n, D, seed + 1), std::vector<int>(n)};
  for (auto& v : t.y) v = static_cast<int>(rng.uniform_index(L));
  return t;
}

TEST(Softmax, GradientMatchesCentralDifferences) {
  const Toy t = toy(20, 4, 3, 5);
  SoftmaxClassifier c(3, 4);
  Rng rng(6);
  std::vector<double> p(c.parameters().size());
  for (auto& v : p) v = rng.normal();
  c.set_parameters(p);
  const std::vector<double> omega{0.4, 1.1, 1.5};
  std::vector<double> grad;
  c.loss(t.x, t.y, omega, &grad);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto q = p;
    q[k] += h;
    c.set_parameters(q);
    const double up = c.loss(t.x, t.y, omega);
    q[k] -= 2 * h;
    c.set_parameters(q);
    const double down = c.loss(t.x, t.y, omega);
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[k]) / std::max(1e-8, std::abs(fd) + std::abs(grad[k])));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Softmax, LogitGradientIsWeightedResidual) {
  // one point, zero parameters: dL/db_l = omega_y * (1/L - [l == y])
  SoftmaxClassifier c(3, 2);
  const DataMatrix x(1, 2, {0.3, -0.2});
  const std::vector<int> y{2};
  const std::vector<double> omega{1.0, 1.0, 1.7};
  std::vector<double> grad;
  const double loss = c.loss(x, y, omega, &grad);
  EXPECT_NEAR(loss, 1.7 * std::log(3.0), 1e-14);
  EXPECT_NEAR(grad[6], 1.7 / 3.0, 1e-14);
  EXPECT_NEAR(grad[8], 1.7 * (1.0 / 3.0 - 1.0), 1e-14);
  EXPECT_NEAR(grad[4], 1.7 * (1.0 / 3.0 - 1.0) * 0.3, 1e-14);
}

TEST(Softmax, UnitWeightsMatchStandardCrossEntropy) {
  const Toy t = toy(200, 5, 4, 8);
  SoftmaxConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 3;
  const SoftmaxFit a = train_softmax_weighted(t.x, t.y, 4, std::nullopt, cfg);
  const SoftmaxFit b = train_softmax_weighted(t.x, t.y, 4, ClassWeights{std::vector<double>(4, 1.0)}, cfg);
  ASSERT_EQ(a.loss_trace.size(), 21u);
  for (std::size_t e = 0; e < a.loss_trace.size(); ++e) EXPECT_LE(std::abs(a.loss_trace[e] - b.loss_trace[e]), 1e-10);
  EXPECT_NEAR(a.loss_trace[0], std::log(4.0), 1e-12);
}

TEST(Softmax, SeparableDataReachesFullAccuracy) {
  DataMatrix x = test::gaussian_matrix(200, 2, 3, 0.5);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = i < 100 ? 0 : 1;
    x(i, 0) += y[i] ? 4.0 : -4.0;
  }
  SoftmaxConfig cfg;
  cfg.epochs = 50;
  const SoftmaxFit f = train_softmax_weighted(x, y, 2, std::nullopt, cfg);
  const auto acc = per_class_accuracy(f.classifier, x, y);
  EXPECT_EQ(*acc[0], 1.0);
  EXPECT_EQ(*acc[1], 1.0);
}

TEST(Softmax, Validation) {
  const Toy t = toy(10, 2, 2, 1);
  SoftmaxConfig cfg;
  std::vector<int> bad = t.y;
  bad[0] = 5;
  EXPECT_THROW(train_softmax_weighted(t.x, bad, 2, std::nullopt, cfg), ArgumentError);
  EXPECT_THROW(train_softmax_weighted(t.x, t.y, 2, ClassWeights{{1.0}}, cfg), ArgumentError);
  cfg.learning_rate = 1e300;
  DataMatrix big = t.x;
  for (auto& v : big.eigen().reshaped()) v *= 1e200;
  EXPECT_THROW(train_softmax_weighted(big, t.y, 2, std::nullopt, cfg), TrainingError);
}

TEST(PerClassAccuracy, ConstantAndAbsentClasses) {
  SoftmaxClassifier c(3, 1);
  std::vector<double> p(c.parameters().size(), 0.0);
  p[3] = 5.0;  // bias of class 0
  c.set_parameters(p);
  const DataMatrix x(4, 1, {0.1, 0.2, 0.3, 0.4});
  const std::vector<int> y{0, 0, 1, 1};
  const auto acc = per_class_accuracy(c, x, y);
  EXPECT_EQ(*acc[0], 1.0);
  EXPECT_EQ(*acc[1], 0.0);
  EXPECT_FALSE(acc[2].has_value());
}

TEST(PerClassAccuracy, RandomClassifierNearChance) {
  double mean = 0.0;
  constexpr int runs = 20;
  for (int s = 0; s < runs; ++s) {
    const Toy t = toy(600, 3, 3, 100 + s);
    SoftmaxClassifier c(3, 3);
    Rng rng(200 + s);
    std::vector<double> p(c.parameters().size());
    for (auto& v : p) v = rng.normal();
    c.set_parameters(p);
    const auto acc = per_class_accuracy(c, t.x, t.y);
    for (const auto& a : acc) mean += *a / (3.0 * runs);
  }
  EXPECT_NEAR(mean, 1.0 / 3.0, 0.05);
}

TEST(Classifier, BlobRoundTrip) {
  test::TempDir dir;
  SoftmaxClassifier c(3, 2);
  c.set_parameters({0.5, -0.25, 1.0, 2.0, -3.0, 0.125, 0.0, 1.5, -0.5});
  save_classifier(c, dir / "clf");
  const SoftmaxClassifier back = load_classifier(dir / "clf");
  EXPECT_EQ(back.parameters(), c.parameters());
  std::filesystem::resize_file(dir / "clf.params", 8);
  EXPECT_THROW(load_classifier(dir / "clf"), Error);
}

}  // namespace
}  // namespace uom
