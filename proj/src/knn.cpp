#include "uom/knn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <utility>

#include "uom/error.hpp"
#include "uom/parallel.hpp"
#include "uom/rng.hpp"

namespace uom {

double euclidean_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

using Candidate = std::pair<double, std::size_t>;  // (distance, row), ordered lexicographically

/// Bounded max-heap keeping the k lexicographically smallest candidates.
class KBest {
 public:
  explicit KBest(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  double bound() const noexcept {
    return heap_.size() < k_ ? std::numeric_limits<double>::infinity() : heap_.front().first;
  }

  void offer(double d, std::size_t idx) {
    const Candidate c{d, idx};
    if (heap_.size() < k_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (c < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  std::vector<Candidate> sorted() && {
    std::sort_heap(heap_.begin(), heap_.end());
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

/// Vantage-point tree over the rows of a matrix. Exact search; a node is
/// skipped only when its triangle-inequality lower bound exceeds the current
/// k-th distance by more than a rounding slack, so boundary ties are still
/// visited and index tie-breaking matches the brute-force scan.
class VpTree {
 public:
  explicit VpTree(const DataMatrix& x) : x_(x), items_(x.rows()) {
    std::iota(items_.begin(), items_.end(), std::size_t{0});
    Rng rng(0x5EEDF00DULL);
    std::vector<double> scratch(x.rows());
    if (!items_.empty()) root_ = build(0, items_.size(), rng, scratch);
  }

  void search(std::span<const double> q, std::size_t exclude, KBest& best) const {
    if (root_ >= 0) visit(root_, q, exclude, best);
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t lo = 0, hi = 0;  // leaf bucket [lo, hi) into items_
    std::size_t vp = 0;
    double mu = 0.0;
    int inside = -1, outside = -1;
    bool leaf = false;
  };

  int build(std::size_t lo, std::size_t hi, Rng& rng, std::vector<double>& dist) {
    Node node;
    if (hi - lo <= kLeafSize) {
      node.leaf = true;
      node.lo = lo;
      node.hi = hi;
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size() - 1);
    }
    const std::size_t pick = lo + rng.uniform_index(hi - lo);
    std::swap(items_[lo], items_[pick]);
    node.vp = items_[lo];
    const auto vp_row = x_.row(node.vp);
    for (std::size_t i = lo + 1; i < hi; ++i) dist[items_[i]] = euclidean_distance(vp_row, x_.row(items_[i]));
    const std::size_t mid = (lo + 1 + hi) / 2;
    auto key = [&](std::size_t a, std::size_t b) {
      return Candidate{dist[a], a} < Candidate{dist[b], b};
    };
    std::nth_element(items_.begin() + static_cast<std::ptrdiff_t>(lo + 1),
                     items_.begin() + static_cast<std::ptrdiff_t>(mid),
                     items_.begin() + static_cast<std::ptrdiff_t>(hi), key);
    node.mu = dist[items_[mid]];
    const auto id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int inside = build(lo + 1, mid, rng, dist);
    const int outside = build(mid, hi, rng, dist);
    nodes_[static_cast<std::size_t>(id)].inside = inside;
    nodes_[static_cast<std::size_t>(id)].outside = outside;
    return id;
  }

  void visit(int id, std::span<const double> q, std::size_t exclude, KBest& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.leaf) {
      for (std::size_t i = node.lo; i < node.hi; ++i) {
        const std::size_t r = items_[i];
        if (r != exclude) best.offer(euclidean_distance(q, x_.row(r)), r);
      }
      return;
    }
    const double d = euclidean_distance(q, x_.row(node.vp));
    if (node.vp != exclude) best.offer(d, node.vp);
    auto slack = [&] { return 1e-9 * (1.0 + d + node.mu); };
    if (d < node.mu) {
      if (node.inside >= 0) visit(node.inside, q, exclude, best);
      if (node.outside >= 0 && node.mu - d <= best.bound() + slack()) visit(node.outside, q, exclude, best);
    } else {
      if (node.outside >= 0) visit(node.outside, q, exclude, best);
      if (node.inside >= 0 && d - node.mu <= best.bound() + slack()) visit(node.inside, q, exclude, best);
    }
  }

  const DataMatrix& x_;
  std::vector<std::size_t> items_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

constexpr std::size_t kNoExclude = std::numeric_limits<std::size_t>::max();

std::vector<Candidate> brute_force_query(const DataMatrix& ref, std::span<const double> q,
                                         std::size_t k, std::size_t exclude) {
  KBest best(k);
  for (std::size_t j = 0; j < ref.rows(); ++j) {
    if (j == exclude) continue;
    const double d = euclidean_distance(q, ref.row(j));
    if (d <= best.bound()) best.offer(d, j);
  }
  return std::move(best).sorted();
}

NeighborTable search_all(const DataMatrix& x, std::size_t k, KnnBackend backend) {
  NeighborTable t;
  t.n = x.rows();
  t.k = k;
  t.distances.assign(t.n * k, 0.0);
  t.indices.assign(t.n * k, 0);
  std::optional<VpTree> tree;
  if (backend == KnnBackend::vp_tree) tree.emplace(x);
  parallel_for(t.n, [&](std::size_t i) {
    std::vector<Candidate> row;
    if (tree) {
      KBest best(k);
      tree->search(x.row(i), i, best);
      row = std::move(best).sorted();
    } else {
      row = brute_force_query(x, x.row(i), k, i);
    }
    for (std::size_t j = 0; j < k; ++j) {
      t.distances[i * k + j] = row[j].first;
      t.indices[i * k + j] = row[j].second;
    }
  });
  return t;
}

}  // namespace

DataMatrix remove_duplicate_rows(const DataMatrix& x, std::vector<std::size_t>& kept) {
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto row_less = [&](std::size_t a, std::size_t b) {
    const auto ra = x.row(a), rb = x.row(b);
    for (std::size_t j = 0; j < ra.size(); ++j) {
      if (ra[j] < rb[j]) return true;
      if (rb[j] < ra[j]) return false;
    }
    return a < b;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::vector<bool> drop(x.rows(), false);
  for (std::size_t p = 1; p < order.size(); ++p) {
    const auto ra = x.row(order[p - 1]), rb = x.row(order[p]);
    if (std::equal(ra.begin(), ra.end(), rb.begin())) drop[order[p]] = true;
  }
  kept.clear();
  std::vector<double> values;
  std::vector<int> labels;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (drop[i]) continue;
    kept.push_back(i);
    const auto r = x.row(i);
    values.insert(values.end(), r.begin(), r.end());
    if (x.has_labels()) labels.push_back(x.labels()[i]);
  }
  DataMatrix out(kept.size(), x.cols(), std::move(values));
  if (x.has_labels()) out.set_labels(std::move(labels));
  return out;
}

NeighborTable knn_distances(const DataMatrix& x, std::size_t k, DuplicatePolicy duplicates,
                            KnnBackend backend) {
  if (k == 0) throw ArgumentError("knn: k must be positive");
  if (duplicates == DuplicatePolicy::remove) {
    std::vector<std::size_t> kept;
    const DataMatrix unique = remove_duplicate_rows(x, kept);
    if (k >= unique.rows())
      throw ArgumentError("knn: k = " + std::to_string(k) + " needs more than " +
                          std::to_string(unique.rows()) + " distinct points");
    NeighborTable t = search_all(unique, k, backend);
    t.duplicates_removed = x.rows() - unique.rows();
    t.source_rows = std::move(kept);
    return t;
  }
  if (k >= x.rows())
    throw ArgumentError("knn: k = " + std::to_string(k) + " must be smaller than n = " +
                        std::to_string(x.rows()));
  NeighborTable t = search_all(x, k, backend);
  t.source_rows.resize(t.n);
  std::iota(t.source_rows.begin(), t.source_rows.end(), std::size_t{0});
  if (duplicates == DuplicatePolicy::reject) {
    for (std::size_t i = 0; i < t.n; ++i) {
      if (t.distance(i, 0) == 0.0) {
        const auto a = std::min(i, t.index(i, 0)), b = std::max(i, t.index(i, 0));
        throw ArgumentError("duplicate points: rows " + std::to_string(a) + " and " +
                            std::to_string(b) + " coincide (zero distance)");
      }
    }
  }
  return t;
}

NeighborTable knn_distances(const DataMatrix& x, std::size_t k, bool dedup, KnnBackend backend) {
  return knn_distances(x, k, dedup ? DuplicatePolicy::remove : DuplicatePolicy::reject, backend);
}

std::vector<double> nn_distance_to_set(const DataMatrix& queries, const DataMatrix& reference,
                                       KnnBackend backend) {
  if (reference.rows() == 0) throw ArgumentError("nn_distance_to_set: reference set is empty");
  if (queries.cols() != reference.cols())
    throw ArgumentError("nn_distance_to_set: dimension mismatch (" + std::to_string(queries.cols()) +
                        " vs " + std::to_string(reference.cols()) + ")");
  std::vector<double> out(queries.rows());
  std::optional<VpTree> tree;
  if (backend == KnnBackend::vp_tree) tree.emplace(reference);
  parallel_for(queries.rows(), [&](std::size_t i) {
    if (tree) {
      KBest best(1);
      tree->search(queries.row(i), kNoExclude, best);
      out[i] = std::move(best).sorted().front().first;
    } else {
      out[i] = brute_force_query(reference, queries.row(i), 1, kNoExclude).front().first;
    }
  });
  return out;
}

void save_neighbor_table(const NeighborTable& t, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "i,j,index,distance\n";
  out.precision(17);
  for (std::size_t i = 0; i < t.n; ++i)
    for (std::size_t j = 0; j < t.k; ++j)
      out << i << ',' << j + 1 << ',' << t.index(i, j) << ',' << t.distance(i, j) << '\n';
}

}  // namespace uom
