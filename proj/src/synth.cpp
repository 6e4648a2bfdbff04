#include "uom/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uom/error.hpp"
#include "uom/knn.hpp"
#include "uom/rng.hpp"

namespace uom {

namespace {

Eigen::MatrixXd gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sd) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = sd * rng.normal();
  return m;
}

Eigen::VectorXd gaussian_vector(Rng& rng, std::size_t n, double sd) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = sd * rng.normal();
  return v;
}

/// Modified Gram-Schmidt, in place, column by column.
void orthonormalize_columns(Eigen::MatrixXd& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index p = 0; p < j; ++p) a.col(j) -= a.col(p).dot(a.col(j)) * a.col(p);
    const double norm = a.col(j).norm();
    if (!(norm > 1e-12)) throw Error("orthonormalize_columns: rank-deficient draw");
    a.col(j) /= norm;
  }
}

}  // namespace

SyntheticData gen_affine_manifold(std::size_t n, std::size_t d, std::size_t D, std::uint64_t seed,
                                  double noise_sigma) {
  if (d < 1 || d > D)
    throw ArgumentError("gen_affine_manifold: need 1 <= d <= D, got d = " + std::to_string(d) +
                        ", D = " + std::to_string(D));
  if (!(noise_sigma >= 0.0)) throw ArgumentError("gen_affine_manifold: noise_sigma must be >= 0");
  Rng rng(seed);
  Eigen::MatrixXd a = gaussian_matrix(rng, D, d, 1.0);
  orthonormalize_columns(a);
  const Eigen::VectorXd b = gaussian_vector(rng, D, 1.0);

  DataMatrix x(n, D);
  Eigen::VectorXd z(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.uniform();
    const Eigen::VectorXd p = a * z + b;
    auto row = x.row(i);
    for (std::size_t j = 0; j < D; ++j) row[j] = p(static_cast<Eigen::Index>(j));
    if (noise_sigma > 0.0)
      for (std::size_t j = 0; j < D; ++j) row[j] += noise_sigma * rng.normal();
  }
  SyntheticData out{std::move(x), {}};
  out.truth.ambient_dim = D;
  out.truth.components.push_back({d, "affine", seed, n, 0, noise_sigma});
  return out;
}

RandomGenerator::RandomGenerator(std::size_t latent_dim, std::size_t ambient_dim, std::uint64_t seed,
                                 std::size_t hidden1, std::size_t hidden2) {
  if (latent_dim < 1 || ambient_dim < 1 || hidden1 < 1 || hidden2 < 1)
    throw ArgumentError("RandomGenerator: dimensions must be positive");
  Rng rng(seed);
  w1_ = gaussian_matrix(rng, hidden1, latent_dim, 1.0 / std::sqrt(static_cast<double>(latent_dim)));
  b1_ = gaussian_vector(rng, hidden1, 0.1);
  w2_ = gaussian_matrix(rng, hidden2, hidden1, 1.0 / std::sqrt(static_cast<double>(hidden1)));
  b2_ = gaussian_vector(rng, hidden2, 0.1);
  w3_ = gaussian_matrix(rng, ambient_dim, hidden2, 1.0 / std::sqrt(static_cast<double>(hidden2)));
  b3_ = gaussian_vector(rng, ambient_dim, 0.1);
}

Eigen::VectorXd RandomGenerator::operator()(const Eigen::VectorXd& z) const {
  const Eigen::VectorXd h1 = (w1_ * z + b1_).array().tanh().matrix();
  const Eigen::VectorXd h2 = (w2_ * h1 + b2_).array().tanh().matrix();
  return w3_ * h2 + b3_;
}

SyntheticData gen_pushforward_manifold(std::size_t n, std::size_t d_latent, std::size_t m,
                                       std::size_t D, std::uint64_t seed) {
  if (m > d_latent || d_latent > D || d_latent < 1)
    throw ArgumentError("gen_pushforward_manifold: need 0 <= m <= d_latent <= D, got m = " +
                        std::to_string(m) + ", d_latent = " + std::to_string(d_latent) +
                        ", D = " + std::to_string(D));
  const RandomGenerator g(d_latent, D, seed);
  Rng rng(derive_seed(seed, 0));
  DataMatrix x(n, D);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d_latent));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) z(static_cast<Eigen::Index>(j)) = rng.normal();
    const Eigen::VectorXd p = g(z);
    auto row = x.row(i);
    for (std::size_t j = 0; j < D; ++j) row[j] = p(static_cast<Eigen::Index>(j));
  }
  SyntheticData out{std::move(x), {}};
  out.truth.ambient_dim = D;
  out.truth.components.push_back({m, "pushforward", seed, n, d_latent, 0.0});
  return out;
}

namespace {

DataMatrix translated(const DataMatrix& x, const Eigen::VectorXd& shift) {
  DataMatrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += shift(static_cast<Eigen::Index>(j));
  }
  return out;
}

double min_cross_distance(const DataMatrix& a, const DataMatrix& b) {
  const auto d = nn_distance_to_set(a, b);
  return *std::min_element(d.begin(), d.end());
}

}  // namespace

SyntheticData compose_union(std::vector<SyntheticData> components, double gap, std::uint64_t seed) {
  if (components.empty()) throw ArgumentError("compose_union: no components");
  if (!(gap >= 0.0)) throw ArgumentError("compose_union: gap must be >= 0");
  const std::size_t D = components.front().x.cols();
  for (const auto& c : components) {
    if (c.x.cols() != D) throw ArgumentError("compose_union: components differ in ambient dimension");
    if (c.x.rows() == 0) throw ArgumentError("compose_union: empty component");
  }

  constexpr int kDoublingCap = 60;
  constexpr int kBisectionSteps = 12;
  SyntheticData out;
  out.truth.ambient_dim = D;
  out.truth.gap = gap;
  out.truth.min_distance = 0.0;
  DataMatrix placed = components.front().x;
  std::vector<DataMatrix> parts{components.front().x};
  double overall_min = std::numeric_limits<double>::infinity();

  for (std::size_t l = 1; l < components.size(); ++l) {
    Rng rng(derive_seed(seed, l));
    Eigen::VectorXd u = gaussian_vector(rng, D, 1.0);
    u /= u.norm();
    const DataMatrix& c = components[l].x;
    auto dist_at = [&](double t) { return min_cross_distance(translated(c, t * u), placed); };

    double t = 0.0;
    double dist = dist_at(t);
    if (dist < gap) {
      double lo = 0.0;
      t = std::max(gap, 1e-12);
      int iter = 0;
      while ((dist = dist_at(t)) < gap) {
        if (++iter > kDoublingCap)
          throw PlacementError("compose_union: gap " + std::to_string(gap) +
                               " unreachable for component " + std::to_string(l));
        lo = t;
        t *= 2.0;
      }
      double hi = t;
      for (int s = 0; s < kBisectionSteps; ++s) {
        const double mid = 0.5 * (lo + hi);
        const double dm = dist_at(mid);
        if (dm >= gap) {
          hi = mid;
          dist = dm;
        } else {
          lo = mid;
        }
      }
      t = hi;
      dist = dist_at(t);
    }
    overall_min = std::min(overall_min, dist);
    DataMatrix moved = translated(c, t * u);
    const DataMatrix pair[] = {placed, moved};
    placed = concat_rows(pair);
    parts.push_back(std::move(moved));
  }

  std::vector<int> labels;
  for (std::size_t l = 0; l < parts.size(); ++l) {
    parts[l].clear_labels();
    labels.insert(labels.end(), parts[l].rows(), static_cast<int>(l));
    for (const auto& ct : components[l].truth.components) out.truth.components.push_back(ct);
  }
  out.x = concat_rows(parts);
  out.x.set_labels(std::move(labels));
  out.truth.min_distance = components.size() > 1 ? overall_min : 0.0;
  return out;
}

nlohmann::json to_json(const SyntheticTruth& t) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : t.components) {
    nlohmann::json j = {{"dim", c.dim}, {"kind", c.kind}, {"seed", c.seed}, {"n", c.n}};
    if (c.kind == "pushforward") j["latent_dim"] = c.latent_dim;
    else j["noise_sigma"] = c.noise_sigma;
    comps.push_back(std::move(j));
  }
  return {{"ambient_dim", t.ambient_dim},
          {"components", std::move(comps)},
          {"gap", t.gap},
          {"min_distance", t.min_distance}};
}

}  // namespace uom
