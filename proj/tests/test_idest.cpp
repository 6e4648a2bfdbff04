#include <cmath>
#include <fstream>

#include "oracles.hpp"
#include "test_util.hpp"
#include "uom/error.hpp"
#include "uom/idest.hpp"
#include "uom/knn.hpp"
#include "uom/synth.hpp"

namespace uom {
namespace {

/// Direct evaluation of the averaged estimator with normalization c.
double oracle_mle(const NeighborTable& t, std::size_t k, double c) {
  double total = 0.0;
  for (std::size_t i = 0; i < t.n; ++i) {
    double inner = 0.0;
    for (std::size_t j = 1; j < k; ++j) inner += std::log(t.distance(i, k - 1) / t.distance(i, j - 1));
    total += inner / c;
  }
  return static_cast<double>(t.n) / total;
}

TEST(MleId, MatchesDirectEvaluation) {
  const DataMatrix x = test::gaussian_matrix(400, 5, 3);
  const NeighborTable t = knn_distances(x, 20, DuplicatePolicy::reject);
  for (std::size_t k : {2, 3, 5, 10, 20}) {
    const auto e = mle_id(t, k);
    EXPECT_NEAR(e.value, oracle_mle(t, k, double(k - 1)), 1e-10 * e.value) << "k=" << k;
    EXPECT_EQ(e.n_used, 400u);
  }
  const auto e2 = mle_id(t, 10, IdVariant::k_minus_2);
  EXPECT_NEAR(e2.value, oracle_mle(t, 10, 8.0), 1e-10 * e2.value);
}

TEST(MleId, VariantIdentityOnArbitraryTables) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const NeighborTable t = test::random_table(50, 12, seed);
    for (std::size_t k = 3; k <= 12; ++k) {
      const double a = mle_id(t, k, IdVariant::k_minus_1).value;
      const double b = mle_id(t, k, IdVariant::k_minus_2).value;
      const double want = a * double(k - 2) / double(k - 1);
      EXPECT_LE(std::abs(b - want), 1e-12 * std::abs(want));
    }
  }
}

TEST(MleId, HypercubeEstimatesNearTruth) {
  for (std::size_t d : {1, 2, 4}) {
    const auto s = gen_affine_manifold(3000, d, 12, 17 + d);
    const auto e = estimate_id(s.x, 10);
    EXPECT_NEAR(e.value, double(d), 0.15 * double(d)) << "d=" << d;
  }
}

TEST(MleId, Errors) {
  const NeighborTable t = test::random_table(10, 5, 1);
  EXPECT_THROW(mle_id(t, 1), ArgumentError);
  EXPECT_THROW(mle_id(t, 2, IdVariant::k_minus_2), ArgumentError);
  EXPECT_THROW(mle_id(t, 6), ArgumentError);

  NeighborTable zero = t;
  zero.distances[0] = 0.0;
  EXPECT_THROW(mle_id(zero, 5), EstimatorError);

  NeighborTable flat = t;
  for (std::size_t i = 0; i < flat.n; ++i)
    for (std::size_t j = 0; j < flat.k; ++j) flat.distances[i * flat.k + j] = 1.0;
  EXPECT_THROW(mle_id(flat, 5), EstimatorError);
}

TEST(MleId, LatentDimRoundsUp) {
  EXPECT_EQ(latent_dim_from_estimate({20, IdVariant::k_minus_1, 3.01, 10}), 4u);
  EXPECT_EQ(latent_dim_from_estimate({20, IdVariant::k_minus_1, 3.0, 10}), 3u);
  EXPECT_EQ(latent_dim_from_estimate({20, IdVariant::k_minus_1, 0.4, 10}), 1u);
}

TEST(MleId, ParseVariant) {
  EXPECT_EQ(parse_id_variant("k-2"), IdVariant::k_minus_2);
  EXPECT_EQ(to_string(IdVariant::k_minus_1), "k-1");
  EXPECT_THROW(parse_id_variant("k-3"), ArgumentError);
}

TEST(PerGroupId, StructureAndSmallGroups) {
  DataMatrix x = test::gaussian_matrix(60, 3, 5);
  std::vector<int> labels(60, 0);
  for (std::size_t i = 50; i < 60; ++i) labels[i] = 1;  // 10 points: too few for k = 20
  x.set_labels(labels);
  const IdReport r = per_group_id(x, GroupIndex::from_labels(labels), {3, 5, 20});
  ASSERT_EQ(r.groups.size(), 2u);
  ASSERT_EQ(r.cells.size(), 6u);
  EXPECT_TRUE(r.cell(0, 2).estimate.has_value());
  EXPECT_TRUE(r.cell(1, 1).estimate.has_value());
  EXPECT_FALSE(r.cell(1, 2).estimate.has_value());
  ASSERT_EQ(r.pooled.size(), 3u);
  EXPECT_TRUE(r.pooled[2].has_value());
  EXPECT_EQ(r.summaries[1].valid, 2u);
  EXPECT_LE(r.summaries[0].min, r.summaries[0].median);
  EXPECT_LE(r.summaries[0].median, r.summaries[0].max);
}

TEST(PerGroupId, DuplicatesRemovedAndReported) {
  DataMatrix x = test::gaussian_matrix(40, 2, 6);
  for (std::size_t j = 0; j < 2; ++j) x(1, j) = x(0, j);
  const IdReport r = per_group_id(x, GroupIndex::single(40), {3});
  EXPECT_EQ(r.duplicates_removed[0], 1u);
  EXPECT_EQ(r.cell(0, 0).estimate->n_used, 39u);
}

TEST(PerGroupId, RejectsTooSmallK) {
  const DataMatrix x = test::gaussian_matrix(40, 2, 6);
  EXPECT_THROW(per_group_id(x, GroupIndex::single(40), {1}), ArgumentError);
  EXPECT_THROW(per_group_id(x, GroupIndex::single(40), {}), ArgumentError);
}

TEST(PerGroupId, CsvHasPooledRows) {
  test::TempDir dir;
  const DataMatrix x = test::gaussian_matrix(40, 2, 6);
  const IdReport r = per_group_id(x, GroupIndex::single(40), {3, 5});
  save_id_report_csv(r, dir / "r.csv");
  std::ifstream in(dir / "r.csv");
  std::string all((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(all.rfind("group,k,variant,estimate,n_used\n", 0), 0u);
  EXPECT_NE(all.find("pooled,3,k-1,"), std::string::npos);
  const auto j = to_json(r);
  EXPECT_TRUE(j.contains("pooled"));
}

}  // namespace
}  // namespace uom
