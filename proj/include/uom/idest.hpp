#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uom/data.hpp"
#include "uom/knn.hpp"

namespace uom {

/// Denominator used in the MLE average: k - 1 (default) or k - 2.
enum class IdVariant { k_minus_1, k_minus_2 };

std::string to_string(IdVariant v);
IdVariant parse_id_variant(const std::string& s);

struct IdEstimate {
  std::size_t k = 0;
  IdVariant variant = IdVariant::k_minus_1;
  double value = 0.0;
  std::size_t n_used = 0;
};

/// Maximum-likelihood intrinsic dimension from the first k columns of `t`:
///
///   d_k = [ 1/(n c) * sum_i sum_{j<k} log(T_k(x_i) / T_j(x_i)) ]^-1
///
/// with c = k - 1 or k - 2. Sums run in row order in double precision.
/// Throws EstimatorError on a zero distance or an all-equal neighbor table.
IdEstimate mle_id(const NeighborTable& t, std::size_t k, IdVariant variant = IdVariant::k_minus_1);

/// Smallest integer latent dimension covering the estimate: ceil(value), at least 1.
std::size_t latent_dim_from_estimate(const IdEstimate& e);

struct IdCell {
  std::size_t group = 0;
  std::size_t k = 0;
  std::optional<IdEstimate> estimate;  ///< empty when the group is too small for k
};

struct IdSummary {
  double min = 0.0, max = 0.0, median = 0.0;
  std::size_t valid = 0;
};

struct IdReport {
  std::vector<std::size_t> groups;
  std::vector<std::size_t> k_list;
  IdVariant variant = IdVariant::k_minus_1;
  std::vector<IdCell> cells;  ///< group-major, one per (group, k)
  std::vector<IdSummary> summaries;
  std::vector<std::optional<IdEstimate>> pooled;  ///< whole dataset, one per k
  std::vector<std::size_t> duplicates_removed;     ///< per group

  const IdCell& cell(std::size_t group, std::size_t k_pos) const {
    return cells[group * k_list.size() + k_pos];
  }
};

inline const std::vector<std::size_t> kDefaultKList{3, 5, 10, 20};

/// Runs the estimator independently on each group and on the pooled data for
/// every k. Duplicate rows are removed per group before the neighbor search.
/// Groups with too few distinct points for some k get an empty cell.
IdReport per_group_id(const DataMatrix& x, const GroupIndex& g,
                      const std::vector<std::size_t>& k_list = kDefaultKList,
                      IdVariant variant = IdVariant::k_minus_1);

/// Estimate over the whole dataset (duplicates removed) for a single k.
IdEstimate estimate_id(const DataMatrix& x, std::size_t k, IdVariant variant = IdVariant::k_minus_1);

nlohmann::json to_json(const IdReport& r);
/// Long-form `group,k,variant,estimate,n_used`; pooled rows use group "pooled",
/// insufficient cells an empty estimate.
void save_id_report_csv(const IdReport& r, const std::filesystem::path& path);

}  // namespace uom
