#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "uom/data.hpp"

namespace uom {

struct MmdResult {
  double value = 0.0;  ///< unbiased MMD^2 estimate (may be negative)
  double bandwidth = 0.0;
  std::size_t m = 0, n = 0;
};

/// Rows per set used by the median heuristic; larger sets are strided down to this.
inline constexpr std::size_t kMedianHeuristicRows = 1500;

/// Median pairwise Euclidean distance over the pooled rows of a and b.
/// Each set is strided to at most kMedianHeuristicRows rows first, so the
/// result does not depend on argument order.
double median_pairwise_distance(const DataMatrix& a, const DataMatrix& b);

/// Unbiased MMD^2 with the RBF kernel exp(-||a-b||^2 / (2 sigma^2)); sigma is
/// the median heuristic when `bandwidth` is empty.
MmdResult mmd2_unbiased(const DataMatrix& xs, const DataMatrix& ys,
                        std::optional<double> bandwidth = std::nullopt);

struct BridgeReport {
  double tau = 0.0;
  double off_support_fraction = 0.0;
  std::vector<double> min_distances;
};

/// 3 x the 95th percentile (linear interpolation) of the training set's own
/// 1-NN distances.
double auto_bridge_tau(const DataMatrix& train);

/// Fraction of samples whose nearest training point is farther than tau.
BridgeReport bridge_mass(const DataMatrix& samples, const DataMatrix& train,
                         std::optional<double> tau = std::nullopt);

struct Correlation {
  double r = 0.0;
  double p = 1.0;  ///< two-sided, Student t with n - 2 degrees of freedom
};

Correlation pearson_r_and_pvalue(std::span<const double> x, std::span<const double> y);

struct IdAccuracyReport {
  Correlation correlation;
  double slope = 0.0, intercept = 0.0;
  std::vector<double> d_hats, accuracies;
};

IdAccuracyReport id_accuracy_report(std::span<const double> d_hats, std::span<const double> accuracies);

nlohmann::json to_json(const MmdResult& r);
nlohmann::json to_json(const BridgeReport& r);  ///< without per-sample distances
nlohmann::json to_json(const IdAccuracyReport& r);
/// `x\ty\tfit` rows.
void save_plot_tsv(const IdAccuracyReport& r, const std::filesystem::path& path);

}  // namespace uom
