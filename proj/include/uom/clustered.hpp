#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uom/data.hpp"
#include "uom/idest.hpp"
#include "uom/rng.hpp"
#include "uom/twostep.hpp"

namespace uom {

enum class DimsMode {
  automatic,    ///< per-cluster estimate, rounded up
  constant,     ///< one value for every cluster (pooled estimate unless given)
  per_cluster,  ///< explicit list
};

std::string to_string(DimsMode m);

struct DimsPolicy {
  DimsMode mode = DimsMode::automatic;
  std::vector<std::size_t> values;  ///< per_cluster: L entries; constant: empty or one entry
  std::size_t k = 20;
  IdVariant variant = IdVariant::k_minus_1;
};

struct ClusteredConfig {
  DimsPolicy dims;
  TwoStepConfig model;
  std::uint64_t seed = 0;
  bool parallel = false;  ///< train clusters concurrently (more resident models, same results)
};

struct ClusterEntry {
  std::size_t size = 0;
  std::size_t latent_dim = 0;
  double weight = 0.0;
  std::optional<double> id_estimate;
  std::string file;      ///< parameter file name inside the bundle directory
  std::string checksum;  ///< of the parameter blob
  nlohmann::json descriptor;
};

/// Mixture of per-cluster pushforward models with weights |D_l| / sum |D_l'|.
/// Only the manifest is held in memory; cluster parameters load on demand.
struct ClusteredModel {
  std::filesystem::path dir;
  std::vector<ClusterEntry> clusters;
  nlohmann::json config;

  std::size_t L() const noexcept { return clusters.size(); }
  std::vector<double> weights() const;
  /// Reads, verifies and unpacks cluster l. Throws LoadError naming l for a
  /// missing file and IntegrityError on a checksum mismatch.
  PushforwardModel load_cluster(std::size_t l) const;
};

/// p(l) = sizes[l] / sum(sizes).
std::vector<double> mixture_weights(std::span<const std::size_t> sizes);

/// Counts of m categorical draws (inverse CDF on p).
std::vector<std::size_t> draw_multinomial(std::size_t m, std::span<const double> p, Rng& rng);

/// Number of cluster models currently materialized by training or sampling,
/// and the peak since the last reset.
std::size_t resident_models();
std::size_t peak_resident_models();
void reset_peak_resident_models();

/// Cluster-by-cluster training: resolve the latent dimension, fit a two-step
/// model with seed derive_seed(cfg.seed, l), persist it to `dir`, release it.
/// Writes manifest.json when done.
ClusteredModel train_clustered(const DataMatrix& x, const GroupIndex& g, const ClusteredConfig& cfg,
                               const std::filesystem::path& dir);

/// Draws cluster counts from Multinomial(m, p) with Rng(seed), then loads each
/// cluster once and takes its share with seed derive_seed(seed, l). Rows are
/// labeled by cluster.
DataMatrix sample_clustered(const ClusteredModel& model, std::size_t m, std::uint64_t seed);

/// Writes manifest.json to `dir`, copying parameter files when `dir` differs
/// from model.dir.
void save_bundle(const ClusteredModel& model, const std::filesystem::path& dir);
/// Reads and validates manifest.json only.
ClusteredModel load_bundle(const std::filesystem::path& dir);

nlohmann::json manifest_json(const ClusteredModel& model);

}  // namespace uom
