#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "uom/data.hpp"

namespace uom {

/// Per-point sorted distances T_1..T_k to the k nearest other points.
struct NeighborTable {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> distances;     // n x k, each row non-decreasing
  std::vector<std::size_t> indices;  // n x k, row ids into the searched set
  /// Original row of each searched point (identity unless duplicates were removed).
  std::vector<std::size_t> source_rows;
  std::size_t duplicates_removed = 0;

  double distance(std::size_t i, std::size_t j) const noexcept { return distances[i * k + j]; }
  std::size_t index(std::size_t i, std::size_t j) const noexcept { return indices[i * k + j]; }
};

enum class KnnBackend { brute_force, vp_tree };

/// What to do with exact duplicate rows (zero distances).
enum class DuplicatePolicy {
  reject,  ///< ArgumentError naming the first duplicate pair
  remove,  ///< keep the first occurrence of each distinct row and search that set
  keep,    ///< report zero distances as they are
};

/// Exact k-nearest-neighbor Euclidean distances, self excluded, ties broken by
/// ascending row index. Both backends return identical tables.
NeighborTable knn_distances(const DataMatrix& x, std::size_t k, DuplicatePolicy duplicates,
                            KnnBackend backend = KnnBackend::vp_tree);

/// `dedup` true maps to DuplicatePolicy::remove, false to DuplicatePolicy::reject.
NeighborTable knn_distances(const DataMatrix& x, std::size_t k, bool dedup,
                            KnnBackend backend = KnnBackend::vp_tree);

/// For each row of `queries`, the smallest Euclidean distance to any row of `reference`.
std::vector<double> nn_distance_to_set(const DataMatrix& queries, const DataMatrix& reference,
                                       KnnBackend backend = KnnBackend::vp_tree);

/// Debug dump: `i,j,index,distance` with j counted from 1.
void save_neighbor_table(const NeighborTable& t, const std::filesystem::path& path);

/// Rows of `x` with later exact duplicates dropped; `kept` receives the original row ids.
DataMatrix remove_duplicate_rows(const DataMatrix& x, std::vector<std::size_t>& kept);

double euclidean_distance(std::span<const double> a, std::span<const double> b) noexcept;

}  // namespace uom
