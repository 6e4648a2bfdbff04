#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "uom/data.hpp"

namespace uom {

// ---------------------------------------------------------------------------
// First step: decoders and the autoencoders that produce them.

enum class DecoderKind { affine, mlp };
std::string to_string(DecoderKind k);
DecoderKind parse_decoder_kind(const std::string& s);

/// Fully connected layer, `weights` is out x in.
struct DenseLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
  bool tanh = false;  ///< tanh activation; false means linear
};

/// Feed-forward network over column batches (one sample per column).
class Mlp {
 public:
  Mlp() = default;
  /// Layer sizes in order, e.g. {D, 32, d}. Hidden layers are tanh, the last
  /// layer linear. Weights ~ N(0, 1/fan_in), biases zero.
  Mlp(const std::vector<std::size_t>& sizes, std::uint64_t seed);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& in) const;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::size_t parameter_count() const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Encoder/decoder pair. Affine: decode(z) = basis z + offset, encode(x) =
/// basis^T (x - offset). MLP: inputs are standardized as (x - offset) / scale
/// before the encoder and the decoder output is mapped back.
struct Decoder {
  DecoderKind kind = DecoderKind::affine;
  std::size_t latent_dim = 0;
  std::size_t ambient_dim = 0;
  Eigen::MatrixXd basis;   ///< affine: D x d, orthonormal columns
  Eigen::VectorXd offset;  ///< D
  double scale = 1.0;      ///< mlp input scale
  Mlp encoder;             ///< mlp only
  Mlp decoder;             ///< mlp only

  /// Rows of `codes` (m x d) to rows in ambient space (m x D).
  RowMatrix decode(const RowMatrix& codes) const;
  RowMatrix encode(const RowMatrix& x) const;
};

struct PcaFit {
  Decoder decoder;
  RowMatrix codes;
  /// Mean over entries of the squared residual x - decode(encode(x)).
  double reconstruction_error = 0.0;
  std::vector<double> component_variances;  ///< variance of each code coordinate
};

/// Affine first step: offset = column mean, basis = top-d right singular
/// vectors of the centered data (sign fixed so each column's largest-magnitude
/// entry is positive).
PcaFit fit_pca(const DataMatrix& x, std::size_t d);

struct MlpConfig {
  std::vector<std::size_t> widths{64};  ///< encoder hidden widths; decoder mirrors them
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

/// Tanh autoencoder D -> widths -> d -> reversed widths -> D with exact
/// backpropagation of the mean squared reconstruction error.
class Autoencoder {
 public:
  Autoencoder(std::size_t ambient_dim, std::size_t latent_dim, const std::vector<std::size_t>& widths,
              std::uint64_t seed);

  /// Batch columns are samples, already standardized.
  double loss(const Eigen::MatrixXd& batch) const;
  /// Loss and gradient (flattened in parameters() order).
  double loss_and_gradient(const Eigen::MatrixXd& batch, std::vector<double>& grad) const;

  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& p);
  /// p -= lr * grad
  void step(const std::vector<double>& grad, double lr);

  const Mlp& encoder() const noexcept { return encoder_; }
  const Mlp& decoder() const noexcept { return decoder_; }

 private:
  Mlp encoder_, decoder_;
};

struct MlpFit {
  Decoder decoder;
  RowMatrix codes;
  double reconstruction_error = 0.0;  ///< mean squared entry residual, data units
  std::vector<double> loss_trace;     ///< standardized full-data loss, before epoch 1 and after each epoch
};

/// Mini-batch gradient descent with a fixed learning rate. Throws
/// TrainingError naming the epoch if the loss becomes non-finite.
MlpFit fit_mlp_ae(const DataMatrix& x, std::size_t d, const MlpConfig& cfg);

// ---------------------------------------------------------------------------
// Second step: latent densities.

enum class BaseKind { gaussian, gmm };
std::string to_string(BaseKind k);
BaseKind parse_base_kind(const std::string& s);

/// Diagonal Gaussian mixture (a single component for the gaussian kind).
struct LatentDensity {
  BaseKind kind = BaseKind::gaussian;
  std::size_t dim = 0;
  RowMatrix means;      ///< K x d
  RowMatrix variances;  ///< K x d
  std::vector<double> weights;

  std::size_t components() const noexcept { return weights.size(); }
  /// Per-component log(weight * N(z; mean, diag(var))).
  void component_log_densities(std::span<const double> z, std::vector<double>& out) const;
  double log_density(std::span<const double> z) const;
};

inline constexpr double kDefaultVarianceFloor = 1e-6;

/// Maximum-likelihood diagonal Gaussian (biased variances, floored).
LatentDensity fit_gaussian(const RowMatrix& codes, double variance_floor = kDefaultVarianceFloor);

struct GmmConfig {
  std::size_t max_iterations = 200;
  double tolerance = 1e-8;  ///< stop when the mean log-likelihood gains less than this
  std::uint64_t seed = 0;
  double variance_floor = kDefaultVarianceFloor;
};

struct GmmFit {
  LatentDensity density;
  std::vector<double> log_likelihood_trace;  ///< mean per-point log-likelihood at each E-step
  std::size_t reseed_events = 0;
  bool converged = false;
};

/// EM for a diagonal GMM initialized from k-means++. A component whose
/// responsibility mass vanishes is reseeded at the worst-fit point.
GmmFit fit_gmm(const RowMatrix& codes, std::size_t K, const GmmConfig& cfg);

// ---------------------------------------------------------------------------
// Pushforward models.

struct PushforwardModel {
  Decoder decoder;
  LatentDensity base;
  double reconstruction_error = 0.0;
  std::vector<double> loss_trace;  ///< first-step trace (mlp) or empty
  std::vector<double> log_likelihood_trace;
};

struct TwoStepConfig {
  DecoderKind decoder = DecoderKind::affine;
  BaseKind base = BaseKind::gaussian;
  std::size_t gmm_components = 10;
  MlpConfig mlp;
  GmmConfig gmm;
  std::uint64_t seed = 0;  ///< overrides mlp.seed and gmm.seed through derived streams
};

nlohmann::json to_json(const TwoStepConfig& cfg);
TwoStepConfig two_step_config_from_json(const nlohmann::json& j);

/// First-step fit with latent dimension d, then the base density on its codes.
PushforwardModel fit_two_step(const DataMatrix& x, std::size_t d, const TwoStepConfig& cfg);

/// m i.i.d. draws: component by inverse CDF on the weights, z = mean + sqrt(var) * N(0, I), x = G(z).
DataMatrix sample(const PushforwardModel& model, std::size_t m, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Persistence: JSON descriptor + little-endian f32 parameter blob, "format": 1.

inline constexpr int kModelFormat = 1;

nlohmann::json describe(const PushforwardModel& model);
std::vector<float> pack_parameters(const PushforwardModel& model);
PushforwardModel unpack_model(const nlohmann::json& descriptor, const std::vector<float>& blob);

/// FNV-1a 64-bit digest of the blob bytes, as 16 hex digits.
std::string checksum(const std::vector<float>& blob);

void write_blob(const std::vector<float>& blob, const std::filesystem::path& path);
std::vector<float> read_blob(const std::filesystem::path& path);

/// Writes `<stem>.json` and `<stem>.params`.
void save_model(const PushforwardModel& model, const std::filesystem::path& stem);
PushforwardModel load_model(const std::filesystem::path& stem);

}  // namespace uom
