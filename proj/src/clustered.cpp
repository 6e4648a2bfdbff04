#include "uom/clustered.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "uom/error.hpp"
#include "uom/parallel.hpp"

namespace uom {

namespace fs = std::filesystem;

std::string to_string(DimsMode m) {
  switch (m) {
    case DimsMode::automatic: return "auto";
    case DimsMode::constant: return "constant";
    case DimsMode::per_cluster: return "per-cluster";
  }
  return "?";
}

namespace {

std::atomic<std::size_t> g_resident{0};
std::atomic<std::size_t> g_peak{0};

/// Holds one materialized cluster model and keeps the resident counter honest.
class ResidentModel {
 public:
  explicit ResidentModel(PushforwardModel m) : model_(std::move(m)) {
    const std::size_t now = ++g_resident;
    std::size_t peak = g_peak.load();
    while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
    }
  }
  ~ResidentModel() { --g_resident; }
  ResidentModel(const ResidentModel&) = delete;
  ResidentModel& operator=(const ResidentModel&) = delete;

  const PushforwardModel& get() const noexcept { return model_; }

 private:
  PushforwardModel model_;
};

std::string cluster_file(std::size_t l) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "cluster_%03zu.params", l);
  return buf;
}

constexpr int kBundleFormat = 1;
constexpr double kWeightTolerance = 1e-12;

}  // namespace

std::size_t resident_models() { return g_resident.load(); }
std::size_t peak_resident_models() { return g_peak.load(); }
void reset_peak_resident_models() { g_peak.store(g_resident.load()); }

std::vector<double> mixture_weights(std::span<const std::size_t> sizes) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total == 0) throw ArgumentError("mixture_weights: total size is zero");
  std::vector<double> p;
  p.reserve(sizes.size());
  for (auto s : sizes) p.push_back(static_cast<double>(s) / static_cast<double>(total));
  return p;
}

std::vector<std::size_t> draw_multinomial(std::size_t m, std::span<const double> p, Rng& rng) {
  if (p.empty()) throw ArgumentError("draw_multinomial: no categories");
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  std::vector<std::size_t> counts(p.size(), 0);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = rng.uniform() * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto l = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), p.size() - 1);
    ++counts[l];
  }
  return counts;
}

std::vector<double> ClusteredModel::weights() const {
  std::vector<double> w;
  for (const auto& c : clusters) w.push_back(c.weight);
  return w;
}

PushforwardModel ClusteredModel::load_cluster(std::size_t l) const {
  if (l >= clusters.size()) throw IndexError("cluster " + std::to_string(l) + " out of range");
  const auto& entry = clusters[l];
  const fs::path path = dir / entry.file;
  if (!fs::exists(path))
    throw LoadError("cluster " + std::to_string(l) + ": parameter file '" + entry.file + "' is missing");
  const auto blob = read_blob(path);
  if (checksum(blob) != entry.checksum)
    throw IntegrityError("cluster " + std::to_string(l) + ": parameter checksum mismatch");
  return unpack_model(entry.descriptor, blob);
}

ClusteredModel train_clustered(const DataMatrix& x, const GroupIndex& g, const ClusteredConfig& cfg,
                               const fs::path& dir) {
  const auto parts = split_by_group(x, g);
  const std::size_t L = g.L;

  ClusteredModel model;
  model.dir = dir;
  model.clusters.resize(L);
  const auto weights = mixture_weights(g.sizes);
  for (std::size_t l = 0; l < L; ++l) {
    model.clusters[l].size = g.sizes[l];
    model.clusters[l].weight = weights[l];
    model.clusters[l].file = cluster_file(l);
  }

  // Resolve latent dimensions before any fitting.
  const auto& dims = cfg.dims;
  switch (dims.mode) {
    case DimsMode::automatic: {
      for (std::size_t l = 0; l < L; ++l) {
        const DataMatrix& part = parts[l];
        IdEstimate e;
        try {
          e = estimate_id(part, dims.k, dims.variant);
        } catch (const ArgumentError& err) {
          throw ArgumentError("cluster " + std::to_string(l) + ": " + err.what());
        }
        model.clusters[l].id_estimate = e.value;
        model.clusters[l].latent_dim = latent_dim_from_estimate(e);
      }
      break;
    }
    case DimsMode::constant: {
      std::size_t d = 0;
      std::optional<double> pooled;
      if (!dims.values.empty()) {
        d = dims.values.front();
      } else {
        const IdEstimate e = estimate_id(x, dims.k, dims.variant);
        pooled = e.value;
        d = latent_dim_from_estimate(e);
      }
      for (auto& c : model.clusters) {
        c.latent_dim = d;
        c.id_estimate = pooled;
      }
      break;
    }
    case DimsMode::per_cluster: {
      if (dims.values.size() != L)
        throw ArgumentError("per-cluster dims: got " + std::to_string(dims.values.size()) +
                            " values for " + std::to_string(L) + " clusters");
      for (std::size_t l = 0; l < L; ++l) model.clusters[l].latent_dim = dims.values[l];
      break;
    }
  }
  for (std::size_t l = 0; l < L; ++l) {
    const auto d = model.clusters[l].latent_dim;
    if (d < 1 || d > std::min(parts[l].rows(), x.cols()))
      throw ArgumentError("cluster " + std::to_string(l) + ": latent dimension " + std::to_string(d) +
                          " needs at least that many points and ambient dimensions (has " +
                          std::to_string(parts[l].rows()) + " points, D = " + std::to_string(x.cols()) + ")");
  }

  fs::create_directories(dir);
  auto train_one = [&](std::size_t l) {
    TwoStepConfig mc = cfg.model;
    mc.seed = derive_seed(cfg.seed, l);
    try {
      const ResidentModel resident(fit_two_step(parts[l], model.clusters[l].latent_dim, mc));
      const auto blob = pack_parameters(resident.get());
      write_blob(blob, dir / model.clusters[l].file);
      model.clusters[l].checksum = checksum(blob);
      model.clusters[l].descriptor = describe(resident.get());
    } catch (const Error& e) {
      throw TrainingError("cluster " + std::to_string(l) + ": " + e.what());
    }
  };
  if (cfg.parallel) {
    parallel_for(L, train_one);
  } else {
    for (std::size_t l = 0; l < L; ++l) train_one(l);
  }

  model.config = {{"dims",
                   {{"mode", to_string(dims.mode)},
                    {"values", dims.values},
                    {"k", dims.k},
                    {"variant", to_string(dims.variant)}}},
                  {"model", to_json(cfg.model)},
                  {"seed", cfg.seed}};
  save_bundle(model, dir);
  return model;
}

DataMatrix sample_clustered(const ClusteredModel& model, std::size_t m, std::uint64_t seed) {
  if (m < 1) throw ArgumentError("sample_clustered: m must be >= 1");
  Rng rng(seed);
  const auto counts = draw_multinomial(m, model.weights(), rng);
  std::vector<DataMatrix> parts;
  for (std::size_t l = 0; l < model.L(); ++l) {
    if (counts[l] == 0) continue;
    const ResidentModel resident(model.load_cluster(l));
    DataMatrix s = sample(resident.get(), counts[l], derive_seed(seed, l));
    s.set_labels(std::vector<int>(counts[l], static_cast<int>(l)));
    parts.push_back(std::move(s));
  }
  return concat_rows(parts);
}

nlohmann::json manifest_json(const ClusteredModel& model) {
  std::vector<std::size_t> sizes, dims;
  nlohmann::json clusters = nlohmann::json::array();
  for (std::size_t l = 0; l < model.L(); ++l) {
    const auto& c = model.clusters[l];
    sizes.push_back(c.size);
    dims.push_back(c.latent_dim);
    nlohmann::json j = {{"index", l},
                        {"size", c.size},
                        {"latent_dim", c.latent_dim},
                        {"weight", c.weight},
                        {"file", c.file},
                        {"checksum", c.checksum},
                        {"model", c.descriptor}};
    j["id_estimate"] = c.id_estimate ? nlohmann::json(*c.id_estimate) : nlohmann::json(nullptr);
    clusters.push_back(std::move(j));
  }
  return {{"format", kBundleFormat}, {"L", model.L()},          {"sizes", sizes},
          {"dims", dims},            {"weights", model.weights()}, {"clusters", std::move(clusters)},
          {"config", model.config}};
}

void save_bundle(const ClusteredModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  if (!model.dir.empty() && fs::exists(model.dir) && !fs::equivalent(model.dir, dir)) {
    for (const auto& c : model.clusters)
      fs::copy_file(model.dir / c.file, dir / c.file, fs::copy_options::overwrite_existing);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest in '" + dir.filename().string() + "'");
  out << manifest_json(model).dump(2) << '\n';
}

ClusteredModel load_bundle(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw LoadError("bundle has no manifest.json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest.json: ") + e.what());
  }
  ClusteredModel model;
  model.dir = dir;
  try {
    if (j.at("format").get<int>() != kBundleFormat)
      throw FormatError("unsupported bundle format " + j.at("format").dump());
    const auto L = j.at("L").get<std::size_t>();
    const auto sizes = j.at("sizes").get<std::vector<std::size_t>>();
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    const auto weights = j.at("weights").get<std::vector<double>>();
    const auto& clusters = j.at("clusters");
    if (sizes.size() != L || dims.size() != L || weights.size() != L || clusters.size() != L)
      throw ValidationError("manifest: per-cluster arrays do not match L = " + std::to_string(L));
    const auto expected = mixture_weights(sizes);
    double total = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      total += weights[l];
      if (std::abs(weights[l] - expected[l]) > kWeightTolerance)
        throw ValidationError("manifest: weight of cluster " + std::to_string(l) +
                              " does not equal its size fraction");
    }
    if (std::abs(total - 1.0) > kWeightTolerance) throw ValidationError("manifest: weights do not sum to 1");
    for (std::size_t l = 0; l < L; ++l) {
      const auto& c = clusters[l];
      ClusterEntry e;
      e.size = sizes[l];
      e.latent_dim = dims[l];
      e.weight = weights[l];
      if (c.at("size").get<std::size_t>() != e.size || c.at("latent_dim").get<std::size_t>() != e.latent_dim)
        throw ValidationError("manifest: cluster " + std::to_string(l) + " entry disagrees with the summary arrays");
      if (!c.at("id_estimate").is_null()) e.id_estimate = c.at("id_estimate").get<double>();
      e.file = c.at("file").get<std::string>();
      e.checksum = c.at("checksum").get<std::string>();
      e.descriptor = c.at("model");
      model.clusters.push_back(std::move(e));
    }
    model.config = j.value("config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  return model;
}

}  // namespace uom
