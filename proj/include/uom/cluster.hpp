#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "uom/data.hpp"

namespace uom {

/// One agglomeration step. Cluster ids: rows are 0..n-1, the cluster created
/// at step s (0-based) gets id n + s. left_id < right_id.
struct MergeStep {
  std::size_t step = 0;
  std::size_t left_id = 0;
  std::size_t right_id = 0;
  double cost = 0.0;  ///< Ward cost |A||B|/(|A|+|B|) * ||mu_A - mu_B||^2
  std::size_t new_size = 0;
};

struct WardResult {
  GroupIndex groups;
  std::vector<MergeStep> merges;
};

/// Largest n accepted by ward_agglomerative (the dissimilarity matrix is O(n^2)).
inline constexpr std::size_t kWardMaxPoints = 20000;

/// Greedy agglomerative clustering with Ward's criterion, starting from
/// singletons and stopping at L clusters. Costs are updated with the
/// Lance-Williams recurrence; ties go to the lexicographically smallest pair
/// of cluster ids. Groups are numbered by first appearance in row order.
WardResult ward_agglomerative(const DataMatrix& x, std::size_t L);

struct KMeansResult {
  GroupIndex groups;
  RowMatrix centroids;  ///< L x D
  std::size_t iterations = 0;
  bool converged = false;
};

inline constexpr std::size_t kLloydMaxIterations = 300;

/// k-means++ seeding (D^2 weighting) followed by Lloyd iterations until the
/// assignment stops changing or `max_iterations` is hit. An empty cluster is
/// reseeded at the point farthest from its assigned centroid.
KMeansResult kmeanspp(const DataMatrix& x, std::size_t L, std::uint64_t seed,
                      std::size_t max_iterations = kLloydMaxIterations);

/// Single-column CSV with header "group".
void save_groups(const GroupIndex& g, const std::filesystem::path& path);
GroupIndex load_groups(const std::filesystem::path& path);
/// `step,left_id,right_id,cost,new_size`
void save_dendrogram(const std::vector<MergeStep>& merges, const std::filesystem::path& path);

}  // namespace uom
