#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "uom/data.hpp"

namespace uom {

struct ComponentTruth {
  std::size_t dim = 0;  ///< true intrinsic dimension
  std::string kind;     ///< "affine" or "pushforward"
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::size_t latent_dim = 0;  ///< pushforward only
  double noise_sigma = 0.0;
};

struct SyntheticTruth {
  std::size_t ambient_dim = 0;
  std::vector<ComponentTruth> components;
  double gap = 0.0;           ///< requested minimum inter-component distance
  double min_distance = 0.0;  ///< achieved minimum (0 for a single component)
};

struct SyntheticData {
  DataMatrix x;
  SyntheticTruth truth;
};

/// Uniform samples of [0,1]^d mapped by x = A z + b, where A is a D x d
/// Gaussian matrix with Gram-Schmidt orthonormalized columns and b ~ N(0, I),
/// plus isotropic N(0, noise_sigma^2) noise.
SyntheticData gen_affine_manifold(std::size_t n, std::size_t d, std::size_t D, std::uint64_t seed,
                                  double noise_sigma = 0.0);

/// Fixed random tanh network R^{d_latent} -> R^D with two hidden layers
/// (weights N(0, 1/fan_in), biases N(0, 0.01)), linear output.
class RandomGenerator {
 public:
  RandomGenerator(std::size_t latent_dim, std::size_t ambient_dim, std::uint64_t seed,
                  std::size_t hidden1 = 64, std::size_t hidden2 = 64);

  Eigen::VectorXd operator()(const Eigen::VectorXd& z) const;
  std::size_t latent_dim() const noexcept { return static_cast<std::size_t>(w1_.cols()); }
  std::size_t ambient_dim() const noexcept { return static_cast<std::size_t>(w3_.rows()); }

 private:
  Eigen::MatrixXd w1_, w2_, w3_;
  Eigen::VectorXd b1_, b2_, b3_;
};

/// Samples G(z) with z ~ N(0, I_{d_latent}) and every coordinate past the
/// first m set to zero, so the true dimension is at most m. The generator is
/// RandomGenerator(d_latent, D, seed); latents come from a stream derived from seed.
SyntheticData gen_pushforward_manifold(std::size_t n, std::size_t d_latent, std::size_t m,
                                       std::size_t D, std::uint64_t seed);

/// Places components one after another, translating component l along a
/// random unit direction (stream derive_seed(seed, l)) until its minimum
/// distance to the already placed rows is at least `gap`, then stacks them
/// with labels equal to the component index.
SyntheticData compose_union(std::vector<SyntheticData> components, double gap, std::uint64_t seed);

nlohmann::json to_json(const SyntheticTruth& t);

}  // namespace uom
