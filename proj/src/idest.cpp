#include "uom/idest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "uom/error.hpp"

namespace uom {

std::string to_string(IdVariant v) { return v == IdVariant::k_minus_1 ? "k-1" : "k-2"; }

IdVariant parse_id_variant(const std::string& s) {
  if (s == "k-1" || s == "k-minus-1") return IdVariant::k_minus_1;
  if (s == "k-2" || s == "k-minus-2") return IdVariant::k_minus_2;
  throw ArgumentError("unknown estimator variant '" + s + "' (expected k-1 or k-2)");
}

IdEstimate mle_id(const NeighborTable& t, std::size_t k, IdVariant variant) {
  const std::size_t min_k = variant == IdVariant::k_minus_1 ? 2 : 3;
  if (k < min_k)
    throw ArgumentError("mle_id: variant " + to_string(variant) + " needs k >= " +
                        std::to_string(min_k) + ", got " + std::to_string(k));
  if (k > t.k)
    throw ArgumentError("mle_id: k = " + std::to_string(k) + " exceeds the table's " +
                        std::to_string(t.k) + " neighbors");
  if (t.n == 0) throw ArgumentError("mle_id: empty neighbor table");

  double sum = 0.0;
  for (std::size_t i = 0; i < t.n; ++i) {
    const double tk = t.distance(i, k - 1);
    for (std::size_t j = 0; j + 1 < k; ++j) {
      const double tj = t.distance(i, j);
      if (!(tj > 0.0))
        throw EstimatorError("mle_id: zero neighbor distance at point " + std::to_string(i) +
                             " (duplicate points make the estimator undefined)");
      sum += std::log(tk / tj);
    }
  }
  const double c = static_cast<double>(variant == IdVariant::k_minus_1 ? k - 1 : k - 2);
  const double mean_log_ratio = sum / (static_cast<double>(t.n) * c);
  const double value = 1.0 / mean_log_ratio;
  if (!(mean_log_ratio > 0.0) || !std::isfinite(value))
    throw EstimatorError("mle_id: all neighbor distances are equal; estimate is unbounded");
  return {k, variant, value, t.n};
}

std::size_t latent_dim_from_estimate(const IdEstimate& e) {
  if (!(e.value > 0.0)) throw ArgumentError("latent_dim_from_estimate: estimate must be positive");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(e.value)));
}

namespace {

/// Estimates for every k in k_list on one point set; empty where the set is too small.
std::vector<std::optional<IdEstimate>> sweep(const DataMatrix& x,
                                             const std::vector<std::size_t>& k_list,
                                             IdVariant variant, std::size_t& duplicates) {
  std::vector<std::size_t> kept;
  const DataMatrix unique = remove_duplicate_rows(x, kept);
  duplicates = x.rows() - unique.rows();
  std::size_t k_max = 0;
  for (auto k : k_list)
    if (k < unique.rows()) k_max = std::max(k_max, k);
  std::vector<std::optional<IdEstimate>> out(k_list.size());
  if (k_max == 0) return out;
  const NeighborTable t = knn_distances(unique, k_max, DuplicatePolicy::reject);
  for (std::size_t p = 0; p < k_list.size(); ++p)
    if (k_list[p] <= k_max) out[p] = mle_id(t, k_list[p], variant);
  return out;
}

}  // namespace

IdReport per_group_id(const DataMatrix& x, const GroupIndex& g, const std::vector<std::size_t>& k_list,
                      IdVariant variant) {
  if (k_list.empty()) throw ArgumentError("per_group_id: k list is empty");
  const std::size_t min_k = variant == IdVariant::k_minus_1 ? 2 : 3;
  for (auto k : k_list)
    if (k < min_k)
      throw ArgumentError("per_group_id: k = " + std::to_string(k) + " is below the minimum " +
                          std::to_string(min_k) + " for variant " + to_string(variant));

  IdReport r;
  r.k_list = k_list;
  r.variant = variant;
  const auto parts = split_by_group(x, g);
  for (std::size_t l = 0; l < g.L; ++l) {
    r.groups.push_back(l);
    std::size_t dup = 0;
    const auto row = sweep(parts[l], k_list, variant, dup);
    r.duplicates_removed.push_back(dup);
    std::vector<double> vals;
    for (std::size_t p = 0; p < k_list.size(); ++p) {
      r.cells.push_back({l, k_list[p], row[p]});
      if (row[p]) vals.push_back(row[p]->value);
    }
    IdSummary s;
    s.valid = vals.size();
    if (!vals.empty()) {
      std::sort(vals.begin(), vals.end());
      s.min = vals.front();
      s.max = vals.back();
      const std::size_t m = vals.size() / 2;
      s.median = vals.size() % 2 ? vals[m] : 0.5 * (vals[m - 1] + vals[m]);
    }
    r.summaries.push_back(s);
  }
  std::size_t dup = 0;
  r.pooled = sweep(x, k_list, variant, dup);
  return r;
}

IdEstimate estimate_id(const DataMatrix& x, std::size_t k, IdVariant variant) {
  std::size_t dup = 0;
  auto out = sweep(x, {k}, variant, dup);
  if (!out[0])
    throw ArgumentError("estimate_id: " + std::to_string(x.rows() - dup) +
                        " distinct points are not enough for k = " + std::to_string(k));
  return *out[0];
}

nlohmann::json to_json(const IdReport& r) {
  using nlohmann::json;
  auto est = [](const std::optional<IdEstimate>& e) -> json {
    if (!e) return json{{"status", "insufficient"}};
    return json{{"estimate", e->value}, {"n_used", e->n_used}};
  };
  json groups = json::array();
  for (std::size_t l = 0; l < r.groups.size(); ++l) {
    json per_k = json::array();
    for (std::size_t p = 0; p < r.k_list.size(); ++p) {
      json cell = est(r.cell(l, p).estimate);
      cell["k"] = r.k_list[p];
      per_k.push_back(std::move(cell));
    }
    const auto& s = r.summaries[l];
    json summary = s.valid ? json{{"min", s.min}, {"max", s.max}, {"median", s.median}} : json(nullptr);
    groups.push_back({{"group", r.groups[l]},
                      {"duplicates_removed", r.duplicates_removed[l]},
                      {"estimates", std::move(per_k)},
                      {"summary", std::move(summary)}});
  }
  json pooled = json::array();
  for (std::size_t p = 0; p < r.k_list.size(); ++p) {
    json cell = est(r.pooled[p]);
    cell["k"] = r.k_list[p];
    pooled.push_back(std::move(cell));
  }
  return {{"variant", to_string(r.variant)},
          {"k_list", r.k_list},
          {"groups", std::move(groups)},
          {"pooled", std::move(pooled)}};
}

void save_id_report_csv(const IdReport& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "group,k,variant,estimate,n_used\n";
  auto line = [&](const std::string& group, std::size_t k, const std::optional<IdEstimate>& e) {
    out << group << ',' << k << ',' << to_string(r.variant) << ',';
    if (e) out << e->value << ',' << e->n_used;
    else out << ',';
    out << '\n';
  };
  for (std::size_t l = 0; l < r.groups.size(); ++l)
    for (std::size_t p = 0; p < r.k_list.size(); ++p)
      line(std::to_string(r.groups[l]), r.k_list[p], r.cell(l, p).estimate);
  for (std::size_t p = 0; p < r.k_list.size(); ++p) line("pooled", r.k_list[p], r.pooled[p]);
}

}  // namespace uom
