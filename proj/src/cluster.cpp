#include "uom/cluster.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <tuple>

#include "uom/error.hpp"
#include "uom/parallel.hpp"
#include "uom/rng.hpp"

namespace uom {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct PairKey {
  double cost = std::numeric_limits<double>::infinity();
  std::size_t lo = std::numeric_limits<std::size_t>::max();
  std::size_t hi = std::numeric_limits<std::size_t>::max();
  std::size_t slot = 0;  // partner slot, not part of the ordering

  bool operator<(const PairKey& o) const noexcept {
    return std::tie(cost, lo, hi) < std::tie(o.cost, o.lo, o.hi);
  }
};

/// Upper-triangular storage of pairwise Ward costs between slots.
class Condensed {
 public:
  explicit Condensed(std::size_t n) : n_(n), data_(n * (n - 1) / 2) {}
  double& at(std::size_t i, std::size_t j) noexcept {
    if (i > j) std::swap(i, j);
    return data_[i * n_ - i * (i + 1) / 2 + (j - i - 1)];
  }

 private:
  std::size_t n_;
  std::vector<double> data_;
};

GroupIndex number_by_first_appearance(const std::vector<std::size_t>& raw, std::size_t L) {
  std::vector<std::size_t> remap(raw.empty() ? 0 : *std::max_element(raw.begin(), raw.end()) + 1,
                                 std::numeric_limits<std::size_t>::max());
  std::size_t next = 0;
  std::vector<std::size_t> assignment(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& m = remap[raw[i]];
    if (m == std::numeric_limits<std::size_t>::max()) m = next++;
    assignment[i] = m;
  }
  return GroupIndex::from_assignment(std::move(assignment), L);
}

}  // namespace

WardResult ward_agglomerative(const DataMatrix& x, std::size_t L) {
  const std::size_t n = x.rows();
  if (L < 1 || L > n)
    throw ArgumentError("ward_agglomerative: L = " + std::to_string(L) + " must lie in [1, " +
                        std::to_string(n) + "]");
  if (n > kWardMaxPoints)
    throw ArgumentError("ward_agglomerative: n = " + std::to_string(n) + " exceeds " +
                        std::to_string(kWardMaxPoints) + " points; use k-means++ instead");

  WardResult result;
  std::vector<std::size_t> id(n), size(n, 1);
  std::vector<bool> active(n, true);
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t i = 0; i < n; ++i) {
    id[i] = i;
    members[i] = {i};
  }
  if (L == n) {
    std::vector<std::size_t> raw(n);
    for (std::size_t i = 0; i < n; ++i) raw[i] = i;
    result.groups = number_by_first_appearance(raw, L);
    return result;
  }

  Condensed cost(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) cost.at(i, j) = 0.5 * squared_distance(x.row(i), x.row(j));

  auto key = [&](std::size_t a, std::size_t b) {
    return PairKey{cost.at(a, b), std::min(id[a], id[b]), std::max(id[a], id[b]), b};
  };
  std::vector<PairKey> nn(n);
  auto rescan = [&](std::size_t a) {
    PairKey best;
    for (std::size_t b = 0; b < n; ++b)
      if (b != a && active[b]) best = std::min(best, key(a, b));
    nn[a] = best;
  };
  for (std::size_t a = 0; a < n; ++a) rescan(a);

  std::vector<std::size_t> stale;
  for (std::size_t step = 0; step + L < n; ++step) {
    std::size_t a = n;
    for (std::size_t s = 0; s < n; ++s)
      if (active[s] && (a == n || nn[s] < nn[a])) a = s;
    const std::size_t b = nn[a].slot;
    const double merge_cost = nn[a].cost;
    const std::size_t keep = std::min(a, b), gone = std::max(a, b);
    const double na = static_cast<double>(size[a]), nb = static_cast<double>(size[b]);

    result.merges.push_back({step, std::min(id[a], id[b]), std::max(id[a], id[b]), merge_cost,
                             size[a] + size[b]});

    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c] || c == a || c == b) continue;
      const double nc = static_cast<double>(size[c]);
      cost.at(c, keep) =
          ((na + nc) * cost.at(c, a) + (nb + nc) * cost.at(c, b) - nc * merge_cost) / (na + nb + nc);
    }
    active[gone] = false;
    size[keep] = size[a] + size[b];
    id[keep] = n + step;
    auto& into = members[keep];
    auto& from = members[gone];
    into.insert(into.end(), from.begin(), from.end());
    from.clear();
    from.shrink_to_fit();

    stale.clear();
    for (std::size_t c = 0; c < n; ++c) {
      if (!active[c] || c == keep) continue;
      if (nn[c].slot == a || nn[c].slot == b) {
        stale.push_back(c);
      } else {
        const PairKey candidate = key(c, keep);
        if (candidate < nn[c]) nn[c] = candidate;
      }
    }
    for (auto c : stale) rescan(c);
    rescan(keep);
  }

  std::vector<std::size_t> raw(n);
  for (std::size_t s = 0; s < n; ++s)
    for (auto row : members[s]) raw[row] = s;
  result.groups = number_by_first_appearance(raw, L);
  return result;
}

KMeansResult kmeanspp(const DataMatrix& x, std::size_t L, std::uint64_t seed,
                      std::size_t max_iterations) {
  const std::size_t n = x.rows(), D = x.cols();
  if (L < 1 || L > n)
    throw ArgumentError("kmeanspp: L = " + std::to_string(L) + " must lie in [1, " +
                        std::to_string(n) + "]");
  Rng rng(seed);
  RowMatrix centroids(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(D));
  auto set_centroid = [&](std::size_t c, std::size_t row) {
    for (std::size_t j = 0; j < D; ++j)
      centroids(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = x(row, j);
  };
  auto centroid = [&](std::size_t c) {
    return std::span<const double>(centroids.data() + c * D, D);
  };

  // Seeding: first center uniform, then proportional to squared distance to the nearest center.
  set_centroid(0, rng.uniform_index(n));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), centroid(0));
  for (std::size_t c = 1; c < L; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0))
      throw ArgumentError("kmeanspp: fewer than L = " + std::to_string(L) + " distinct points");
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    while (d2[pick] == 0.0) --pick;  // guard against rounding at the tail
    set_centroid(c, pick);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x.row(i), centroid(c)));
  }

  KMeansResult res;
  std::vector<std::size_t> assign(n, L), prev(n, L);
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    res.iterations = it + 1;
    parallel_for(n, [&](std::size_t i) {
      std::size_t best = 0;
      double bd = squared_distance(x.row(i), centroid(0));
      for (std::size_t c = 1; c < L; ++c) {
        const double d = squared_distance(x.row(i), centroid(c));
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      assign[i] = best;
      dist[i] = bd;
    });
    std::vector<std::size_t> counts(L, 0);
    for (auto a : assign) ++counts[a];
    bool reseeded = false;
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < L; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && counts[assign[i]] > 1 && (far == n || dist[i] > dist[far])) far = i;
      if (far == n) throw Error("kmeanspp: cannot reseed empty cluster " + std::to_string(c));
      taken[far] = true;
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      reseeded = true;
    }
    centroids.setZero();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < D; ++j)
        centroids(static_cast<Eigen::Index>(assign[i]), static_cast<Eigen::Index>(j)) += x(i, j);
    for (std::size_t c = 0; c < L; ++c) centroids.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
    if (!reseeded && assign == prev) {
      res.converged = true;
      break;
    }
    prev = assign;
  }
  res.groups = GroupIndex::from_assignment(assign, L);
  res.centroids = std::move(centroids);
  return res;
}

void save_groups(const GroupIndex& g, const std::filesystem::path& path) {
  std::vector<int> labels(g.assignment.begin(), g.assignment.end());
  save_labels(labels, path, "group");
}

GroupIndex load_groups(const std::filesystem::path& path) {
  const auto labels = load_labels(path);
  std::vector<std::size_t> a(labels.begin(), labels.end());
  const std::size_t L = a.empty() ? 0 : *std::max_element(a.begin(), a.end()) + 1;
  return GroupIndex::from_assignment(std::move(a), L);
}

void save_dendrogram(const std::vector<MergeStep>& merges, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "step,left_id,right_id,cost,new_size\n";
  for (const auto& m : merges)
    out << m.step << ',' << m.left_id << ',' << m.right_id << ',' << m.cost << ',' << m.new_size << '\n';
}

}  // namespace uom
