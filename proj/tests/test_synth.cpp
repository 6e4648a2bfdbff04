#include <Eigen/SVD>
#include <cmath>

#include "test_util.hpp"
#include "uom/cluster.hpp"
#include "uom/error.hpp"
#include "uom/idest.hpp"
#include "uom/knn.hpp"
#include "uom/synth.hpp"

namespace uom {
namespace {

Eigen::VectorXd singular_values_centered(const DataMatrix& x) {
  RowMatrix c = x.eigen();
  c.rowwise() -= c.colwise().mean();
  return Eigen::JacobiSVD<RowMatrix>(c).singularValues();
}

TEST(Affine, RankEqualsDimension) {
  const auto line = gen_affine_manifold(200, 1, 6, 3);
  const auto sv1 = singular_values_centered(line.x);
  EXPECT_GT(sv1[0], 1.0);
  EXPECT_LT(sv1[1], 1e-10 * sv1[0]);

  const auto full = gen_affine_manifold(200, 6, 6, 3);
  const auto sv6 = singular_values_centered(full.x);
  EXPECT_GT(sv6[5], 1e-3 * sv6[0]);
  EXPECT_EQ(full.truth.components.at(0).dim, 6u);
}

TEST(Affine, PointsStayInsideUnitCubeImage) {
  // orthonormal columns preserve distances, so the diameter is at most sqrt(d)
  const auto s = gen_affine_manifold(300, 3, 10, 5);
  double diameter = 0.0;
  for (std::size_t i = 0; i < s.x.rows(); ++i)
    for (std::size_t j = i + 1; j < s.x.rows(); ++j)
      diameter = std::max(diameter, euclidean_distance(s.x.row(i), s.x.row(j)));
  EXPECT_LE(diameter, std::sqrt(3.0) + 1e-12);
  EXPECT_GT(diameter, 1.0);
}

TEST(Affine, Validation) {
  EXPECT_THROW(gen_affine_manifold(10, 5, 4, 1), ArgumentError);
  EXPECT_THROW(gen_affine_manifold(10, 0, 4, 1), ArgumentError);
  EXPECT_THROW(gen_affine_manifold(10, 2, 4, 1, -1.0), ArgumentError);
}

TEST(Affine, SameSeedBitIdentical) {
  EXPECT_EQ(gen_affine_manifold(100, 2, 5, 9, 0.1).x, gen_affine_manifold(100, 2, 5, 9, 0.1).x);
  EXPECT_NE(gen_affine_manifold(100, 2, 5, 9).x, gen_affine_manifold(100, 2, 5, 10).x);
}

TEST(Affine, NoiseAddsFullRank) {
  const auto s = gen_affine_manifold(300, 1, 4, 5, 0.01);
  const auto sv = singular_values_centered(s.x);
  EXPECT_GT(sv[3], 1e-3);
}

TEST(Pushforward, ZeroActiveCoordinatesGiveOnePoint) {
  const auto s = gen_pushforward_manifold(20, 4, 0, 8, 2);
  for (std::size_t i = 1; i < s.x.rows(); ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(s.x(i, j), s.x(0, j));
}

TEST(Pushforward, MaskedJacobianHasRankAtMostM) {
  constexpr std::size_t d_latent = 8, m = 3, D = 16;
  const RandomGenerator g(d_latent, D, 77);
  Rng rng(5);
  const double h = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(d_latent);
    for (std::size_t j = 0; j < d_latent; ++j) z[j] = rng.normal();
    auto masked = [&](Eigen::VectorXd v) {
      for (std::size_t j = m; j < d_latent; ++j) v[j] = 0.0;
      return g(v);
    };
    Eigen::MatrixXd J(D, d_latent);
    for (std::size_t j = 0; j < d_latent; ++j) {
      Eigen::VectorXd up = z, down = z;
      up[j] += h;
      down[j] -= h;
      J.col(j) = (masked(up) - masked(down)) / (2 * h);
    }
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(J).singularValues();
    EXPECT_GT(sv[m - 1], 1e-3 * sv[0]);
    for (std::size_t j = m; j < d_latent; ++j) EXPECT_LE(sv[j], 1e-6 * sv[0]);
  }
}

TEST(Pushforward, GeneratorMatchesSamples) {
  const auto s = gen_pushforward_manifold(10, 5, 5, 7, 4);
  EXPECT_EQ(s.truth.components[0].dim, 5u);
  EXPECT_EQ(s.truth.components[0].latent_dim, 5u);
  EXPECT_THROW(gen_pushforward_manifold(10, 5, 6, 7, 4), ArgumentError);
  EXPECT_THROW(gen_pushforward_manifold(10, 8, 2, 7, 4), ArgumentError);
}

TEST(Compose, SingleComponentIsIdentityWithLabels) {
  const auto c = gen_affine_manifold(50, 2, 4, 1);
  const auto u = compose_union({c}, 10.0, 3);
  EXPECT_EQ(u.x.values(), c.x.values());
  EXPECT_EQ(u.x.labels(), std::vector<int>(50, 0));
}

TEST(Compose, GapIsRespected) {
  const auto a = gen_affine_manifold(300, 2, 8, 1);
  const auto b = gen_affine_manifold(300, 5, 8, 2);
  const auto u = compose_union({a, b}, 10.0, 3);
  ASSERT_EQ(u.x.rows(), 600u);
  const auto parts = split_by_group(u.x, GroupIndex::from_labels(u.x.labels()));
  const auto d = nn_distance_to_set(parts[1], parts[0]);
  EXPECT_GE(*std::min_element(d.begin(), d.end()), 10.0);
  EXPECT_GE(u.truth.min_distance, 10.0);
  EXPECT_EQ(u.truth.gap, 10.0);
}

TEST(Compose, ComponentsKeepTheirShape) {
  // translation only: within-component distances are unchanged
  const auto a = gen_affine_manifold(100, 2, 4, 1);
  const auto b = gen_affine_manifold(100, 3, 4, 2);
  const auto u = compose_union({a, b}, 5.0, 3);
  for (std::size_t i = 1; i < 100; ++i) {
    EXPECT_NEAR(euclidean_distance(u.x.row(100), u.x.row(100 + i)), euclidean_distance(b.x.row(0), b.x.row(i)),
                1e-9);
  }
}

TEST(Compose, FarBlobsRecoveredByWard) {
  const auto a = gen_affine_manifold(150, 2, 6, 1, 0.05);
  const auto b = gen_affine_manifold(150, 2, 6, 2, 0.05);
  const auto u = compose_union({a, b}, 20.0, 4);
  const WardResult r = ward_agglomerative(u.x, 2);
  for (std::size_t i = 0; i < u.x.rows(); ++i) EXPECT_EQ(int(r.groups.assignment[i]), u.x.labels()[i]);
}

TEST(Compose, Validation) {
  const auto a = gen_affine_manifold(10, 2, 4, 1);
  const auto b = gen_affine_manifold(10, 2, 5, 2);
  EXPECT_THROW(compose_union({a, b}, 1.0, 1), ArgumentError);
  EXPECT_THROW(compose_union({a}, -1.0, 1), ArgumentError);
  EXPECT_THROW(compose_union({}, 1.0, 1), ArgumentError);
}

}  // namespace
}  // namespace uom
