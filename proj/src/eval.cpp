#include "uom/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <boost/math/distributions/students_t.hpp>

#include "uom/error.hpp"
#include "uom/knn.hpp"
#include "uom/parallel.hpp"

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

std::vector<std::size_t> strided_rows(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> rows;
  const std::size_t stride = n <= cap ? 1 : (n + cap - 1) / cap;
  for (std::size_t i = 0; i < n; i += stride) rows.push_back(i);
  return rows;
}

/// Sum over i < j of k(a_i, a_j); rows reduced in index order.
double within_sum(const DataMatrix& a, double gamma) {
  std::vector<double> partial(a.rows(), 0.0);
  parallel_for(a.rows(), [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = i + 1; j < a.rows(); ++j) s += std::exp(-gamma * squared_distance(a.row(i), a.row(j)));
    partial[i] = s;
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

double cross_sum(const DataMatrix& a, const DataMatrix& b, double gamma) {
  std::vector<double> partial(a.rows(), 0.0);
  parallel_for(a.rows(), [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < b.rows(); ++j) s += std::exp(-gamma * squared_distance(a.row(i), b.row(j)));
    partial[i] = s;
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

}  // namespace

double median_pairwise_distance(const DataMatrix& a, const DataMatrix& b) {
  std::vector<std::span<const double>> rows;
  for (auto i : strided_rows(a.rows(), kMedianHeuristicRows)) rows.push_back(a.row(i));
  for (auto i : strided_rows(b.rows(), kMedianHeuristicRows)) rows.push_back(b.row(i));
  if (rows.size() < 2) throw ArgumentError("median_pairwise_distance: need at least two rows");
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) d.push_back(std::sqrt(squared_distance(rows[i], rows[j])));
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  const double upper = d[mid];
  if (d.size() % 2) return upper;
  const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

MmdResult mmd2_unbiased(const DataMatrix& xs, const DataMatrix& ys, std::optional<double> bandwidth) {
  if (xs.rows() < 2 || ys.rows() < 2) throw ArgumentError("mmd2_unbiased: each set needs at least 2 points");
  if (xs.cols() != ys.cols())
    throw ArgumentError("mmd2_unbiased: dimension mismatch (" + std::to_string(xs.cols()) + " vs " +
                        std::to_string(ys.cols()) + ")");
  const double sigma = bandwidth ? *bandwidth : median_pairwise_distance(xs, ys);
  if (!(sigma > 0.0)) throw ArgumentError("mmd2_unbiased: bandwidth must be positive");
  const double gamma = 1.0 / (2.0 * sigma * sigma);
  const double m = static_cast<double>(xs.rows()), n = static_cast<double>(ys.rows());
  const double kxx = 2.0 * within_sum(xs, gamma) / (m * (m - 1.0));
  const double kyy = 2.0 * within_sum(ys, gamma) / (n * (n - 1.0));
  const double kxy = cross_sum(xs, ys, gamma) / (m * n);
  return {kxx + kyy - 2.0 * kxy, sigma, xs.rows(), ys.rows()};
}

double auto_bridge_tau(const DataMatrix& train) {
  if (train.rows() < 2) throw ArgumentError("auto_bridge_tau: need at least 2 training points");
  const NeighborTable t = knn_distances(train, 1, DuplicatePolicy::keep);
  std::vector<double> d = t.distances;
  std::sort(d.begin(), d.end());
  const double pos = 0.95 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, d.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return 3.0 * (d[lo] + frac * (d[hi] - d[lo]));
}

BridgeReport bridge_mass(const DataMatrix& samples, const DataMatrix& train, std::optional<double> tau) {
  if (train.rows() == 0) throw ArgumentError("bridge_mass: training set is empty");
  if (samples.cols() != train.cols()) throw ArgumentError("bridge_mass: dimension mismatch");
  if (samples.rows() == 0) throw ArgumentError("bridge_mass: no samples");
  BridgeReport r;
  r.tau = tau ? *tau : auto_bridge_tau(train);
  if (!(r.tau >= 0.0)) throw ArgumentError("bridge_mass: tau must be >= 0");
  r.min_distances = nn_distance_to_set(samples, train);
  std::size_t off = 0;
  for (double d : r.min_distances)
    if (d > r.tau) ++off;
  r.off_support_fraction = static_cast<double>(off) / static_cast<double>(samples.rows());
  return r;
}

Correlation pearson_r_and_pvalue(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw ArgumentError("pearson: need at least 3 pairs");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw ArgumentError("pearson: correlation undefined for a constant input");
  Correlation c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(c.r) >= 1.0) {
    c.p = 0.0;
    return c;
  }
  const double df = static_cast<double>(n - 2);
  const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
  const boost::math::students_t dist(df);
  c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return c;
}

IdAccuracyReport id_accuracy_report(std::span<const double> d_hats, std::span<const double> accuracies) {
  IdAccuracyReport r;
  r.correlation = pearson_r_and_pvalue(d_hats, accuracies);
  const std::size_t n = d_hats.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += d_hats[i];
    my += accuracies[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (d_hats[i] - mx) * (d_hats[i] - mx);
    sxy += (d_hats[i] - mx) * (accuracies[i] - my);
  }
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.d_hats.assign(d_hats.begin(), d_hats.end());
  r.accuracies.assign(accuracies.begin(), accuracies.end());
  return r;
}

nlohmann::json to_json(const MmdResult& r) {
  return {{"mmd2", r.value}, {"bandwidth", r.bandwidth}, {"m", r.m}, {"n", r.n}};
}

nlohmann::json to_json(const BridgeReport& r) {
  return {{"tau", r.tau}, {"off_support_fraction", r.off_support_fraction}, {"samples", r.min_distances.size()}};
}

nlohmann::json to_json(const IdAccuracyReport& r) {
  return {{"r", r.correlation.r},         {"p", r.correlation.p},   {"slope", r.slope},
          {"intercept", r.intercept},     {"d_hats", r.d_hats},     {"accuracies", r.accuracies}};
}

void save_plot_tsv(const IdAccuracyReport& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "x\ty\tfit\n";
  for (std::size_t i = 0; i < r.d_hats.size(); ++i)
    out << r.d_hats[i] << '\t' << r.accuracies[i] << '\t' << r.intercept + r.slope * r.d_hats[i] << '\n';
}

}  // namespace uom
