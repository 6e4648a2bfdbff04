#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "oracles.hpp"
#include "test_util.hpp"
#include "uom/cluster.hpp"
#include "uom/error.hpp"

namespace uom {
namespace {

TEST(Ward, MergeSequenceMatchesNaiveRecomputation) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.uniform_index(49);
    const std::size_t D = 1 + rng.uniform_index(4);
    const std::size_t L = 1 + rng.uniform_index(std::min<std::size_t>(n, 5));
    const DataMatrix x = test::gaussian_matrix(n, D, 1000 + seed);
    std::vector<std::size_t> want_groups;
    const auto want = test::naive_ward(x, L, want_groups);
    const WardResult got = ward_agglomerative(x, L);
    ASSERT_EQ(got.merges.size(), want.size()) << "seed " << seed;
    for (std::size_t s = 0; s < want.size(); ++s) {
      const auto& m = got.merges[s];
      ASSERT_EQ(m.step, s);
      ASSERT_EQ(m.left_id, want[s].left) << "seed " << seed << " step " << s;
      ASSERT_EQ(m.right_id, want[s].right) << "seed " << seed << " step " << s;
      ASSERT_NEAR(m.cost, want[s].cost, 1e-9 * (1.0 + want[s].cost));
      ASSERT_EQ(m.new_size, want[s].size);
    }
    EXPECT_EQ(got.groups.assignment, want_groups) << "seed " << seed;
    EXPECT_EQ(got.groups.L, L);
  }
}

TEST(Ward, SingletonCostIsHalfSquaredDistance) {
  const DataMatrix x(3, 1, {0.0, 1.0, 10.0});
  const WardResult r = ward_agglomerative(x, 1);
  ASSERT_EQ(r.merges.size(), 2u);
  EXPECT_EQ(r.merges[0].left_id, 0u);
  EXPECT_EQ(r.merges[0].right_id, 1u);
  EXPECT_DOUBLE_EQ(r.merges[0].cost, 0.5);
  EXPECT_EQ(r.merges[1].left_id, 2u);
  EXPECT_EQ(r.merges[1].right_id, 3u);
  // {0,1} mean 0.5 vs {10}: 2*1/3 * 9.5^2
  EXPECT_NEAR(r.merges[1].cost, 2.0 / 3.0 * 9.5 * 9.5, 1e-12);
}

TEST(Ward, TiesGoToSmallestIds) {
  const DataMatrix x(4, 1, {0.0, 1.0, 2.0, 3.0});
  const WardResult r = ward_agglomerative(x, 1);
  EXPECT_EQ(r.merges[0].left_id, 0u);
  EXPECT_EQ(r.merges[0].right_id, 1u);
  EXPECT_EQ(r.merges[1].left_id, 2u);
  EXPECT_EQ(r.merges[1].right_id, 3u);
}

DataMatrix separated_blobs(std::size_t n_per, std::uint64_t seed, double offset) {
  DataMatrix x = test::gaussian_matrix(2 * n_per, 3, seed, 0.1);
  std::vector<int> labels(2 * n_per, 0);
  for (std::size_t i = n_per; i < 2 * n_per; ++i) {
    x(i, 0) += offset;
    labels[i] = 1;
  }
  x.set_labels(labels);
  return x;
}

TEST(Ward, RecoversFarBlobs) {
  // blob diameter is below 1.5, gap is over 20 diameters
  const DataMatrix x = separated_blobs(100, 3, 40.0);
  const WardResult r = ward_agglomerative(x, 2);
  for (std::size_t i = 0; i < x.rows(); ++i) EXPECT_EQ(int(r.groups.assignment[i]), x.labels()[i]);
}

TEST(Ward, Validation) {
  const DataMatrix x = test::gaussian_matrix(5, 2, 1);
  EXPECT_THROW(ward_agglomerative(x, 0), ArgumentError);
  EXPECT_THROW(ward_agglomerative(x, 6), ArgumentError);
  EXPECT_EQ(ward_agglomerative(x, 5).merges.size(), 0u);
}

TEST(KMeans, RecoversFarBlobsDeterministically) {
  const DataMatrix x = separated_blobs(100, 4, 40.0);
  const KMeansResult a = kmeanspp(x, 2, 9);
  const KMeansResult b = kmeanspp(x, 2, 9);
  EXPECT_EQ(a.groups.assignment, b.groups.assignment);
  EXPECT_TRUE(a.converged);
  const std::size_t first = a.groups.assignment[0];
  for (std::size_t i = 0; i < x.rows(); ++i)
    EXPECT_EQ(a.groups.assignment[i] == first, x.labels()[i] == 0);
  EXPECT_EQ(a.centroids.rows(), 2);
}

TEST(KMeans, Validation) {
  const DataMatrix same(4, 1, {1.0, 1.0, 1.0, 2.0});
  EXPECT_THROW(kmeanspp(same, 3, 1), ArgumentError);
  EXPECT_THROW(kmeanspp(same, 0, 1), ArgumentError);
}

TEST(Groups, FileRoundTrip) {
  test::TempDir dir;
  const GroupIndex g = GroupIndex::from_assignment({0, 1, 1, 2, 0}, 3);
  save_groups(g, dir / "g.csv");
  const GroupIndex h = load_groups(dir / "g.csv");
  EXPECT_EQ(h.assignment, g.assignment);
  EXPECT_EQ(h.L, 3u);
}

}  // namespace
}  // namespace uom
