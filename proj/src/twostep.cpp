#include "uom/twostep.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/SVD>

#include "uom/cluster.hpp"
#include "uom/error.hpp"
#include "uom/parallel.hpp"
#include "uom/rng.hpp"

namespace uom {

std::string to_string(DecoderKind k) { return k == DecoderKind::affine ? "affine" : "mlp"; }

DecoderKind parse_decoder_kind(const std::string& s) {
  if (s == "affine" || s == "pca") return DecoderKind::affine;
  if (s == "mlp") return DecoderKind::mlp;
  throw ArgumentError("unknown decoder kind '" + s + "' (expected affine or mlp)");
}

std::string to_string(BaseKind k) { return k == BaseKind::gaussian ? "gaussian" : "gmm"; }

BaseKind parse_base_kind(const std::string& s) {
  if (s == "gaussian") return BaseKind::gaussian;
  if (s == "gmm") return BaseKind::gmm;
  throw ArgumentError("unknown base kind '" + s + "' (expected gaussian or gmm)");
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw ArgumentError("Mlp: need at least input and output sizes");
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    if (sizes[i] == 0 || sizes[i + 1] == 0) throw ArgumentError("Mlp: zero-width layer");
    DenseLayer layer;
    const double sd = 1.0 / std::sqrt(static_cast<double>(sizes[i]));
    layer.weights.resize(static_cast<Eigen::Index>(sizes[i + 1]), static_cast<Eigen::Index>(sizes[i]));
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = sd * rng.normal();
    layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes[i + 1]));
    layer.tanh = i + 2 < sizes.size();
    layers_.push_back(std::move(layer));
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& in) const {
  Eigen::MatrixXd h = in;
  for (const auto& l : layers_) {
    Eigen::MatrixXd a = l.weights * h;
    a.colwise() += l.bias;
    h = l.tanh ? Eigen::MatrixXd(a.array().tanh()) : std::move(a);
  }
  return h;
}

std::size_t Mlp::input_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weights.cols());
}

std::size_t Mlp::output_dim() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weights.rows());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

// ---------------------------------------------------------------------------
// Decoder

RowMatrix Decoder::decode(const RowMatrix& codes) const {
  if (static_cast<std::size_t>(codes.cols()) != latent_dim)
    throw ArgumentError("decode: codes have " + std::to_string(codes.cols()) + " columns, expected " +
                        std::to_string(latent_dim));
  if (kind == DecoderKind::affine) {
    RowMatrix out = codes * basis.transpose();
    out.rowwise() += offset.transpose();
    return out;
  }
  Eigen::MatrixXd y = decoder.forward(codes.transpose());
  y *= scale;
  y.colwise() += offset;
  return y.transpose();
}

RowMatrix Decoder::encode(const RowMatrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != ambient_dim)
    throw ArgumentError("encode: data has " + std::to_string(x.cols()) + " columns, expected " +
                        std::to_string(ambient_dim));
  if (kind == DecoderKind::affine) return (x.rowwise() - offset.transpose()) * basis;
  Eigen::MatrixXd xs = x.transpose();
  xs.colwise() -= offset;
  xs /= scale;
  return encoder.forward(xs).transpose();
}

namespace {

double mean_squared_residual(const RowMatrix& x, const RowMatrix& recon) {
  return (x - recon).squaredNorm() / static_cast<double>(x.size());
}

}  // namespace

PcaFit fit_pca(const DataMatrix& x, std::size_t d) {
  const std::size_t n = x.rows(), D = x.cols();
  if (d < 1 || d > std::min(n, D))
    throw ArgumentError("fit_pca: d = " + std::to_string(d) + " must lie in [1, min(n, D) = " +
                        std::to_string(std::min(n, D)) + "]");
  const auto xm = x.eigen();
  const Eigen::VectorXd mean = xm.colwise().mean().transpose();
  Eigen::MatrixXd centered = xm.rowwise() - mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  Eigen::MatrixXd basis = svd.matrixV().leftCols(static_cast<Eigen::Index>(d));
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    Eigen::Index arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0) basis.col(c) *= -1.0;
  }

  PcaFit fit;
  fit.decoder.kind = DecoderKind::affine;
  fit.decoder.latent_dim = d;
  fit.decoder.ambient_dim = D;
  fit.decoder.basis = std::move(basis);
  fit.decoder.offset = mean;
  fit.codes = fit.decoder.encode(xm);
  fit.reconstruction_error = mean_squared_residual(xm, fit.decoder.decode(fit.codes));
  for (Eigen::Index c = 0; c < fit.codes.cols(); ++c)
    fit.component_variances.push_back(fit.codes.col(c).squaredNorm() / static_cast<double>(n));
  return fit;
}

// ---------------------------------------------------------------------------
// Autoencoder

namespace {

std::vector<std::size_t> encoder_sizes(std::size_t D, std::size_t d, const std::vector<std::size_t>& w) {
  std::vector<std::size_t> s{D};
  s.insert(s.end(), w.begin(), w.end());
  s.push_back(d);
  return s;
}

std::vector<std::size_t> decoder_sizes(std::size_t D, std::size_t d, const std::vector<std::size_t>& w) {
  std::vector<std::size_t> s{d};
  s.insert(s.end(), w.rbegin(), w.rend());
  s.push_back(D);
  return s;
}

template <typename Fn>
void for_each_layer(const Mlp& enc, const Mlp& dec, Fn&& fn) {
  for (const auto& l : enc.layers()) fn(l);
  for (const auto& l : dec.layers()) fn(l);
}

template <typename Fn>
void for_each_layer(Mlp& enc, Mlp& dec, Fn&& fn) {
  for (auto& l : enc.layers()) fn(l);
  for (auto& l : dec.layers()) fn(l);
}

}  // namespace

Autoencoder::Autoencoder(std::size_t ambient_dim, std::size_t latent_dim,
                         const std::vector<std::size_t>& widths, std::uint64_t seed)
    : encoder_(encoder_sizes(ambient_dim, latent_dim, widths), seed),
      decoder_(decoder_sizes(ambient_dim, latent_dim, widths), derive_seed(seed, 1)) {
  // The bottleneck is linear: the encoder's last layer has no activation.
}

double Autoencoder::loss(const Eigen::MatrixXd& batch) const {
  const Eigen::MatrixXd y = decoder_.forward(encoder_.forward(batch));
  return (y - batch).squaredNorm() / static_cast<double>(batch.size());
}

double Autoencoder::loss_and_gradient(const Eigen::MatrixXd& batch, std::vector<double>& grad) const {
  std::vector<const DenseLayer*> stack;
  for_each_layer(encoder_, decoder_, [&](const DenseLayer& l) { stack.push_back(&l); });

  std::vector<Eigen::MatrixXd> acts{batch};
  for (const auto* l : stack) {
    Eigen::MatrixXd a = l->weights * acts.back();
    a.colwise() += l->bias;
    acts.push_back(l->tanh ? Eigen::MatrixXd(a.array().tanh()) : std::move(a));
  }
  const Eigen::MatrixXd diff = acts.back() - batch;
  const double denom = static_cast<double>(batch.size());
  const double value = diff.squaredNorm() / denom;

  std::vector<Eigen::MatrixXd> gw(stack.size());
  std::vector<Eigen::VectorXd> gb(stack.size());
  Eigen::MatrixXd g = (2.0 / denom) * diff;
  for (std::size_t i = stack.size(); i-- > 0;) {
    const auto& l = *stack[i];
    if (l.tanh) g.array() *= 1.0 - acts[i + 1].array().square();
    gw[i] = g * acts[i].transpose();
    gb[i] = g.rowwise().sum();
    if (i > 0) g = l.weights.transpose() * g;
  }
  grad.clear();
  for (std::size_t i = 0; i < stack.size(); ++i) {
    grad.insert(grad.end(), gw[i].data(), gw[i].data() + gw[i].size());
    grad.insert(grad.end(), gb[i].data(), gb[i].data() + gb[i].size());
  }
  return value;
}

std::vector<double> Autoencoder::parameters() const {
  std::vector<double> p;
  for_each_layer(encoder_, decoder_, [&](const DenseLayer& l) {
    p.insert(p.end(), l.weights.data(), l.weights.data() + l.weights.size());
    p.insert(p.end(), l.bias.data(), l.bias.data() + l.bias.size());
  });
  return p;
}

void Autoencoder::set_parameters(const std::vector<double>& p) {
  std::size_t pos = 0;
  for_each_layer(encoder_, decoder_, [&](DenseLayer& l) {
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(pos), l.weights.size(), l.weights.data());
    pos += static_cast<std::size_t>(l.weights.size());
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.data());
    pos += static_cast<std::size_t>(l.bias.size());
  });
  if (pos != p.size()) throw ArgumentError("Autoencoder::set_parameters: size mismatch");
}

void Autoencoder::step(const std::vector<double>& grad, double lr) {
  std::size_t pos = 0;
  for_each_layer(encoder_, decoder_, [&](DenseLayer& l) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] -= lr * grad[pos++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] -= lr * grad[pos++];
  });
}

MlpFit fit_mlp_ae(const DataMatrix& x, std::size_t d, const MlpConfig& cfg) {
  const std::size_t n = x.rows(), D = x.cols();
  if (d < 1) throw ArgumentError("fit_mlp_ae: d must be >= 1");
  if (n == 0) throw ArgumentError("fit_mlp_ae: empty dataset");
  if (cfg.batch_size == 0) throw ArgumentError("fit_mlp_ae: batch size must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ArgumentError("fit_mlp_ae: learning rate must be positive");
  for (auto w : cfg.widths)
    if (w == 0) throw ArgumentError("fit_mlp_ae: zero hidden width");

  const auto xm = x.eigen();
  const Eigen::VectorXd mean = xm.colwise().mean().transpose();
  Eigen::MatrixXd xs = xm.transpose();
  xs.colwise() -= mean;
  double scale = std::sqrt(xs.squaredNorm() / static_cast<double>(xs.size()));
  if (!(scale > 0.0)) scale = 1.0;
  xs /= scale;

  Autoencoder ae(D, d, cfg.widths, cfg.seed);
  Rng rng(derive_seed(cfg.seed, 2));
  MlpFit fit;
  fit.loss_trace.push_back(ae.loss(xs));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  Eigen::MatrixXd batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - start);
      batch.resize(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(b));
      for (std::size_t c = 0; c < b; ++c) batch.col(static_cast<Eigen::Index>(c)) = xs.col(static_cast<Eigen::Index>(order[start + c]));
      const double l = ae.loss_and_gradient(batch, grad);
      if (!std::isfinite(l))
        throw TrainingError("fit_mlp_ae: loss became non-finite in epoch " + std::to_string(epoch));
      ae.step(grad, cfg.learning_rate);
    }
    const double l = ae.loss(xs);
    if (!std::isfinite(l))
      throw TrainingError("fit_mlp_ae: loss became non-finite in epoch " + std::to_string(epoch));
    fit.loss_trace.push_back(l);
  }

  fit.decoder.kind = DecoderKind::mlp;
  fit.decoder.latent_dim = d;
  fit.decoder.ambient_dim = D;
  fit.decoder.offset = mean;
  fit.decoder.scale = scale;
  fit.decoder.encoder = ae.encoder();
  fit.decoder.decoder = ae.decoder();
  fit.codes = fit.decoder.encode(xm);
  fit.reconstruction_error = mean_squared_residual(xm, fit.decoder.decode(fit.codes));
  return fit;
}

// ---------------------------------------------------------------------------
// Latent densities

void LatentDensity::component_log_densities(std::span<const double> z, std::vector<double>& out) const {
  constexpr double log_2pi = 1.8378770664093454836;
  const std::size_t K = components();
  out.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    double acc = std::log(weights[k]);
    for (std::size_t j = 0; j < dim; ++j) {
      const double var = variances(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
      const double diff = z[j] - means(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
      acc -= 0.5 * (log_2pi + std::log(var) + diff * diff / var);
    }
    out[k] = acc;
  }
}

namespace {

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Weighted moments for each column of `resp` (n x K). Shared by the single
/// Gaussian fit and the EM M-step so that a one-component mixture reproduces
/// the Gaussian fit exactly.
void m_step(const RowMatrix& z, const RowMatrix& resp, double floor, LatentDensity& out) {
  const auto n = z.rows(), d = z.cols(), K = resp.cols();
  out.dim = static_cast<std::size_t>(d);
  out.means.setZero(K, d);
  out.variances.setZero(K, d);
  out.weights.assign(static_cast<std::size_t>(K), 0.0);
  std::vector<double> mass(static_cast<std::size_t>(K), 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < K; ++k) {
      const double r = resp(i, k);
      mass[static_cast<std::size_t>(k)] += r;
      for (Eigen::Index j = 0; j < d; ++j) out.means(k, j) += r * z(i, j);
    }
  for (Eigen::Index k = 0; k < K; ++k) {
    const double m = mass[static_cast<std::size_t>(k)];
    if (m > 0.0) out.means.row(k) /= m;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < K; ++k) {
      const double r = resp(i, k);
      for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = z(i, j) - out.means(k, j);
        out.variances(k, j) += r * diff * diff;
      }
    }
  for (Eigen::Index k = 0; k < K; ++k) {
    const double m = mass[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < d; ++j) {
      double v = m > 0.0 ? out.variances(k, j) / m : floor;
      out.variances(k, j) = std::max(v, floor);
    }
    out.weights[static_cast<std::size_t>(k)] = m / static_cast<double>(n);
  }
}

}  // namespace

double LatentDensity::log_density(std::span<const double> z) const {
  std::vector<double> lp;
  component_log_densities(z, lp);
  return log_sum_exp(lp);
}

LatentDensity fit_gaussian(const RowMatrix& codes, double variance_floor) {
  if (codes.rows() == 0) throw ArgumentError("fit_gaussian: no codes");
  if (!(variance_floor >= 0.0)) throw ArgumentError("fit_gaussian: variance floor must be >= 0");
  LatentDensity out;
  out.kind = BaseKind::gaussian;
  m_step(codes, RowMatrix::Ones(codes.rows(), 1), variance_floor, out);
  return out;
}

GmmFit fit_gmm(const RowMatrix& codes, std::size_t K, const GmmConfig& cfg) {
  const auto n = static_cast<std::size_t>(codes.rows());
  const auto d = static_cast<std::size_t>(codes.cols());
  if (K < 1) throw ArgumentError("fit_gmm: K must be >= 1");
  if (n < K) throw ArgumentError("fit_gmm: " + std::to_string(n) + " points for K = " + std::to_string(K));
  if (!(cfg.variance_floor >= 0.0)) throw ArgumentError("fit_gmm: variance floor must be >= 0");

  GmmFit fit;
  fit.density.kind = BaseKind::gmm;
  const DataMatrix as_data = DataMatrix::from_eigen(codes);
  const KMeansResult init = kmeanspp(as_data, K, cfg.seed);
  RowMatrix resp = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(K));
  for (std::size_t i = 0; i < n; ++i) resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(init.groups.assignment[i])) = 1.0;
  m_step(codes, resp, cfg.variance_floor, fit.density);

  std::vector<double> point_ll(n);
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    parallel_for(n, [&](std::size_t i) {
      std::vector<double> lp;
      fit.density.component_log_densities(std::span<const double>(codes.data() + i * d, d), lp);
      const double lse = log_sum_exp(lp);
      point_ll[i] = lse;
      for (std::size_t k = 0; k < K; ++k)
        resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = std::exp(lp[k] - lse);
    });
    double ll = 0.0;
    for (double v : point_ll) ll += v;
    ll /= static_cast<double>(n);
    if (!std::isfinite(ll)) throw TrainingError("fit_gmm: non-finite log-likelihood at iteration " + std::to_string(it));
    fit.log_likelihood_trace.push_back(ll);
    if (it > 0 && ll - fit.log_likelihood_trace[it - 1] < cfg.tolerance) {
      fit.converged = true;
      break;
    }
    m_step(codes, resp, cfg.variance_floor, fit.density);

    // Reseed components that lost all responsibility mass.
    constexpr double kEmptyMass = 1e-10;
    std::vector<bool> used(n, false);
    bool reseeded = false;
    for (std::size_t k = 0; k < K; ++k) {
      if (fit.density.weights[k] * static_cast<double>(n) > kEmptyMass) continue;
      std::size_t worst = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!used[i] && (worst == n || point_ll[i] < point_ll[worst])) worst = i;
      used[worst] = true;
      fit.density.means.row(static_cast<Eigen::Index>(k)) = codes.row(static_cast<Eigen::Index>(worst));
      const LatentDensity global = fit_gaussian(codes, cfg.variance_floor);
      fit.density.variances.row(static_cast<Eigen::Index>(k)) = global.variances.row(0);
      fit.density.weights[k] = 1.0 / static_cast<double>(n);
      ++fit.reseed_events;
      reseeded = true;
    }
    if (reseeded) {
      const double total = std::accumulate(fit.density.weights.begin(), fit.density.weights.end(), 0.0);
      for (auto& w : fit.density.weights) w /= total;
    }
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Two-step models

nlohmann::json to_json(const TwoStepConfig& cfg) {
  return {{"decoder", to_string(cfg.decoder)},
          {"base", to_string(cfg.base)},
          {"gmm_components", cfg.gmm_components},
          {"mlp",
           {{"widths", cfg.mlp.widths},
            {"learning_rate", cfg.mlp.learning_rate},
            {"epochs", cfg.mlp.epochs},
            {"batch_size", cfg.mlp.batch_size}}},
          {"gmm",
           {{"max_iterations", cfg.gmm.max_iterations},
            {"tolerance", cfg.gmm.tolerance},
            {"variance_floor", cfg.gmm.variance_floor}}},
          {"seed", cfg.seed}};
}

TwoStepConfig two_step_config_from_json(const nlohmann::json& j) {
  TwoStepConfig c;
  c.decoder = parse_decoder_kind(j.at("decoder").get<std::string>());
  c.base = parse_base_kind(j.at("base").get<std::string>());
  c.gmm_components = j.at("gmm_components").get<std::size_t>();
  const auto& m = j.at("mlp");
  c.mlp.widths = m.at("widths").get<std::vector<std::size_t>>();
  c.mlp.learning_rate = m.at("learning_rate").get<double>();
  c.mlp.epochs = m.at("epochs").get<std::size_t>();
  c.mlp.batch_size = m.at("batch_size").get<std::size_t>();
  const auto& g = j.at("gmm");
  c.gmm.max_iterations = g.at("max_iterations").get<std::size_t>();
  c.gmm.tolerance = g.at("tolerance").get<double>();
  c.gmm.variance_floor = g.at("variance_floor").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

PushforwardModel fit_two_step(const DataMatrix& x, std::size_t d, const TwoStepConfig& cfg) {
  PushforwardModel model;
  RowMatrix codes;
  if (cfg.decoder == DecoderKind::affine) {
    PcaFit pca = fit_pca(x, d);
    model.decoder = std::move(pca.decoder);
    model.reconstruction_error = pca.reconstruction_error;
    codes = std::move(pca.codes);
  } else {
    MlpConfig mc = cfg.mlp;
    mc.seed = derive_seed(cfg.seed, 0);
    MlpFit mlp = fit_mlp_ae(x, d, mc);
    model.decoder = std::move(mlp.decoder);
    model.reconstruction_error = mlp.reconstruction_error;
    model.loss_trace = std::move(mlp.loss_trace);
    codes = std::move(mlp.codes);
  }
  if (cfg.base == BaseKind::gaussian) {
    model.base = fit_gaussian(codes, cfg.gmm.variance_floor);
  } else {
    GmmConfig gc = cfg.gmm;
    gc.seed = derive_seed(cfg.seed, 1);
    GmmFit g = fit_gmm(codes, cfg.gmm_components, gc);
    model.base = std::move(g.density);
    model.log_likelihood_trace = std::move(g.log_likelihood_trace);
  }
  return model;
}

DataMatrix sample(const PushforwardModel& model, std::size_t m, std::uint64_t seed) {
  if (m < 1) throw ArgumentError("sample: m must be >= 1");
  const auto& base = model.base;
  const std::size_t d = base.dim, K = base.components();
  std::vector<double> cdf(K);
  std::partial_sum(base.weights.begin(), base.weights.end(), cdf.begin());
  Rng rng(seed);
  RowMatrix z(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < m; ++i) {
    const double u = rng.uniform() * cdf.back();
    std::size_t k = 0;
    while (k + 1 < K && !(u < cdf[k])) ++k;
    for (std::size_t j = 0; j < d; ++j) {
      const auto ki = static_cast<Eigen::Index>(k), ji = static_cast<Eigen::Index>(j);
      z(static_cast<Eigen::Index>(i), ji) = base.means(ki, ji) + std::sqrt(base.variances(ki, ji)) * rng.normal();
    }
  }
  return DataMatrix::from_eigen(model.decoder.decode(z));
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::vector<std::size_t> layer_sizes(const Mlp& m) {
  std::vector<std::size_t> s;
  if (m.layers().empty()) return s;
  s.push_back(m.input_dim());
  for (const auto& l : m.layers()) s.push_back(static_cast<std::size_t>(l.weights.rows()));
  return s;
}

class BlobReader {
 public:
  explicit BlobReader(const std::vector<float>& b) : blob_(b) {}
  double next() {
    if (pos_ >= blob_.size()) throw FormatError("parameter blob is shorter than its descriptor");
    return blob_[pos_++];
  }
  template <typename M>
  void fill(M& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = next();
  }
  bool done() const { return pos_ == blob_.size(); }

 private:
  const std::vector<float>& blob_;
  std::size_t pos_ = 0;
};

template <typename M>
void append(std::vector<float>& out, const M& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(static_cast<float>(m.data()[i]));
}

}  // namespace

nlohmann::json describe(const PushforwardModel& model) {
  const auto& dec = model.decoder;
  nlohmann::json decoder = {{"kind", to_string(dec.kind)},
                            {"latent_dim", dec.latent_dim},
                            {"ambient_dim", dec.ambient_dim}};
  if (dec.kind == DecoderKind::mlp) {
    decoder["scale"] = dec.scale;
    decoder["encoder_sizes"] = layer_sizes(dec.encoder);
    decoder["decoder_sizes"] = layer_sizes(dec.decoder);
  }
  return {{"format", kModelFormat},
          {"decoder", std::move(decoder)},
          {"base", {{"kind", to_string(model.base.kind)}, {"dim", model.base.dim}, {"components", model.base.components()}}},
          {"reconstruction_error", model.reconstruction_error}};
}

std::vector<float> pack_parameters(const PushforwardModel& model) {
  std::vector<float> out;
  const auto& dec = model.decoder;
  if (dec.kind == DecoderKind::affine) {
    append(out, dec.basis);
    append(out, dec.offset);
  } else {
    append(out, dec.offset);
    for (const auto* net : {&dec.encoder, &dec.decoder})
      for (const auto& l : net->layers()) {
        append(out, l.weights);
        append(out, l.bias);
      }
  }
  append(out, model.base.means);
  append(out, model.base.variances);
  for (double w : model.base.weights) out.push_back(static_cast<float>(w));
  return out;
}

PushforwardModel unpack_model(const nlohmann::json& desc, const std::vector<float>& blob) {
  try {
    if (desc.at("format").get<int>() != kModelFormat)
      throw FormatError("unsupported model format " + desc.at("format").dump());
    PushforwardModel model;
    BlobReader reader(blob);
    auto& dec = model.decoder;
    const auto& jd = desc.at("decoder");
    dec.kind = parse_decoder_kind(jd.at("kind").get<std::string>());
    dec.latent_dim = jd.at("latent_dim").get<std::size_t>();
    dec.ambient_dim = jd.at("ambient_dim").get<std::size_t>();
    const auto D = static_cast<Eigen::Index>(dec.ambient_dim), d = static_cast<Eigen::Index>(dec.latent_dim);
    if (dec.kind == DecoderKind::affine) {
      dec.basis.resize(D, d);
      reader.fill(dec.basis);
      dec.offset.resize(D);
      reader.fill(dec.offset);
    } else {
      dec.scale = jd.at("scale").get<double>();
      dec.offset.resize(D);
      reader.fill(dec.offset);
      auto build = [&](const std::vector<std::size_t>& sizes) {
        Mlp net(sizes, 0);
        for (auto& l : net.layers()) {
          reader.fill(l.weights);
          reader.fill(l.bias);
        }
        return net;
      };
      dec.encoder = build(jd.at("encoder_sizes").get<std::vector<std::size_t>>());
      dec.decoder = build(jd.at("decoder_sizes").get<std::vector<std::size_t>>());
    }
    const auto& jb = desc.at("base");
    auto& base = model.base;
    base.kind = parse_base_kind(jb.at("kind").get<std::string>());
    base.dim = jb.at("dim").get<std::size_t>();
    const auto K = jb.at("components").get<std::size_t>();
    base.means.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(base.dim));
    base.variances.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(base.dim));
    reader.fill(base.means);
    reader.fill(base.variances);
    base.weights.resize(K);
    for (auto& w : base.weights) w = reader.next();
    if (!reader.done()) throw FormatError("parameter blob is longer than its descriptor");
    model.reconstruction_error = desc.value("reconstruction_error", 0.0);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model descriptor: ") + e.what());
  }
}

std::string checksum(const std::vector<float>& blob) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (float f : blob) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFu;
      h *= 0x100000001B3ULL;
    }
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = hex[h & 0xF];
  return s;
}

void write_blob(const std::vector<float>& blob, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (float f : blob) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                           static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
    out.write(bytes, 4);
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::vector<float> read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open parameter file '" + path.filename().string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw FormatError("parameter file size is not a multiple of 4");
  std::vector<float> blob(bytes.size() / 4);
  for (std::size_t i = 0; i < blob.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + static_cast<std::size_t>(b)])) << (8 * b);
    blob[i] = std::bit_cast<float>(bits);
  }
  return blob;
}

void save_model(const PushforwardModel& model, const std::filesystem::path& stem) {
  const auto blob = pack_parameters(model);
  const std::filesystem::path params = stem.string() + ".params";
  write_blob(blob, params);
  auto desc = describe(model);
  desc["params"] = params.filename().string();
  desc["checksum"] = checksum(blob);
  std::ofstream out(stem.string() + ".json");
  if (!out) throw Error("cannot write '" + stem.string() + ".json'");
  out << desc.dump(2) << '\n';
}

PushforwardModel load_model(const std::filesystem::path& stem) {
  std::ifstream in(stem.string() + ".json");
  if (!in) throw LoadError("cannot open model descriptor '" + stem.filename().string() + ".json'");
  nlohmann::json desc;
  try {
    in >> desc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model descriptor: ") + e.what());
  }
  const auto blob = read_blob(stem.parent_path() / desc.at("params").get<std::string>());
  if (checksum(blob) != desc.value("checksum", std::string()))
    throw IntegrityError("parameter checksum mismatch for '" + stem.filename().string() + "'");
  return unpack_model(desc, blob);
}

}  // namespace uom
