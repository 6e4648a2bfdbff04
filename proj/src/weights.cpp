#include "uom/weights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include <json.hpp>

#include "uom/error.hpp"
#include "uom/rng.hpp"
#include "uom/twostep.hpp"

namespace uom {

ClassWeights id_weights(std::span<const double> d_hats) {
  if (d_hats.empty()) throw ArgumentError("id_weights: no classes");
  double total = 0.0;
  for (std::size_t l = 0; l < d_hats.size(); ++l) {
    if (!(d_hats[l] > 0.0) || !std::isfinite(d_hats[l]))
      throw ArgumentError("id_weights: estimate for class " + std::to_string(l) + " is not positive");
    total += d_hats[l];
  }
  ClassWeights w;
  const double L = static_cast<double>(d_hats.size());
  for (double d : d_hats) w.omega.push_back(L * d / total);
  return w;
}

SoftmaxClassifier::SoftmaxClassifier(std::size_t classes, std::size_t dim)
    : classes_(classes), dim_(dim), params_(classes * dim + classes, 0.0) {
  if (classes < 2) throw ArgumentError("softmax classifier needs at least 2 classes");
  if (dim == 0) throw ArgumentError("softmax classifier needs D >= 1");
}

void SoftmaxClassifier::set_parameters(std::vector<double> params) {
  if (params.size() != params_.size())
    throw ArgumentError("softmax parameters: expected " + std::to_string(params_.size()) + " values, got " +
                        std::to_string(params.size()));
  params_ = std::move(params);
}

std::size_t SoftmaxClassifier::predict(std::span<const double> x) const {
  std::size_t best = 0;
  double best_z = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < classes_; ++l) {
    double z = params_[classes_ * dim_ + l];
    for (std::size_t j = 0; j < dim_; ++j) z += params_[l * dim_ + j] * x[j];
    if (z > best_z) {
      best_z = z;
      best = l;
    }
  }
  return best;
}

double SoftmaxClassifier::loss(const DataMatrix& x, std::span<const int> labels, std::span<const double> omega,
                               std::span<const std::size_t> rows, std::vector<double>* gradient) const {
  if (x.cols() != dim_) throw ArgumentError("softmax loss: dimension mismatch");
  if (!omega.empty() && omega.size() != classes_) throw ArgumentError("softmax loss: omega length != L");
  if (rows.empty()) throw ArgumentError("softmax loss: empty batch");
  if (gradient) gradient->assign(params_.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(rows.size());
  std::vector<double> z(classes_);
  double total = 0.0;
  for (std::size_t i : rows) {
    const auto xi = x.row(i);
    const auto y = static_cast<std::size_t>(labels[i]);
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < classes_; ++l) {
      double s = params_[classes_ * dim_ + l];
      for (std::size_t j = 0; j < dim_; ++j) s += params_[l * dim_ + j] * xi[j];
      z[l] = s;
      zmax = std::max(zmax, s);
    }
    double sum = 0.0;
    for (std::size_t l = 0; l < classes_; ++l) sum += std::exp(z[l] - zmax);
    const double lse = zmax + std::log(sum);
    double nll = lse - z[y];
    if (!omega.empty()) nll *= omega[y];
    total += nll;
    if (gradient) {
      const double w = omega.empty() ? 1.0 : omega[y];
      for (std::size_t l = 0; l < classes_; ++l) {
        const double g = w * (std::exp(z[l] - lse) - (l == y ? 1.0 : 0.0)) * inv_b;
        for (std::size_t j = 0; j < dim_; ++j) (*gradient)[l * dim_ + j] += g * xi[j];
        (*gradient)[classes_ * dim_ + l] += g;
      }
    }
  }
  return total * inv_b;
}

double SoftmaxClassifier::loss(const DataMatrix& x, std::span<const int> labels, std::span<const double> omega,
                               std::vector<double>* gradient) const {
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return loss(x, labels, omega, rows, gradient);
}

SoftmaxFit train_softmax_weighted(const DataMatrix& x, std::span<const int> labels, std::size_t classes,
                                  const std::optional<ClassWeights>& omega, const SoftmaxConfig& cfg) {
  if (labels.size() != x.rows()) throw ArgumentError("train_softmax_weighted: label count != row count");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ArgumentError("train_softmax_weighted: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(classes) + ")");
  if (omega && omega->L() != classes) throw ArgumentError("train_softmax_weighted: omega length != L");
  if (cfg.batch_size == 0) throw ArgumentError("train_softmax_weighted: batch size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ArgumentError("train_softmax_weighted: learning rate must be positive");

  SoftmaxFit fit{SoftmaxClassifier(classes, x.cols()), {}};
  const std::span<const double> w = omega ? std::span<const double>(omega->omega) : std::span<const double>();
  auto record = [&](std::size_t epoch) {
    const double l = fit.classifier.loss(x, labels, w);
    if (!std::isfinite(l)) throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
    fit.loss_trace.push_back(l);
  };
  record(0);

  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      fit.classifier.loss(x, labels, w, std::span<const std::size_t>(order).subspan(start, end - start), &grad);
      auto p = fit.classifier.parameters();
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= cfg.learning_rate * grad[k];
      fit.classifier.set_parameters(std::move(p));
    }
    record(epoch);
  }
  return fit;
}

std::vector<std::optional<double>> per_class_accuracy(const SoftmaxClassifier& c, const DataMatrix& x,
                                                      std::span<const int> labels) {
  if (labels.size() != x.rows()) throw ArgumentError("per_class_accuracy: label count != row count");
  if (x.cols() != c.dim()) throw ArgumentError("per_class_accuracy: dimension mismatch");
  std::vector<std::size_t> total(c.classes(), 0), correct(c.classes(), 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || y >= c.classes()) throw ArgumentError("per_class_accuracy: label out of range");
    ++total[y];
    if (c.predict(x.row(i)) == y) ++correct[y];
  }
  std::vector<std::optional<double>> acc(c.classes());
  for (std::size_t l = 0; l < c.classes(); ++l)
    if (total[l]) acc[l] = static_cast<double>(correct[l]) / static_cast<double>(total[l]);
  return acc;
}

void save_class_weights(const ClassWeights& w, std::span<const double> d_hats, const std::filesystem::path& path) {
  if (d_hats.size() != w.L()) throw ArgumentError("save_class_weights: length mismatch");
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "class,d_hat,omega\n";
  for (std::size_t l = 0; l < w.L(); ++l) out << l << ',' << d_hats[l] << ',' << w.omega[l] << '\n';
}

void save_classifier(const SoftmaxClassifier& c, const std::filesystem::path& stem) {
  std::vector<float> blob(c.parameters().begin(), c.parameters().end());
  const std::filesystem::path params = stem.string() + ".params";
  write_blob(blob, params);
  const nlohmann::json desc = {{"format", kModelFormat}, {"kind", "softmax"},
                               {"classes", c.classes()}, {"dim", c.dim()},
                               {"params", params.filename().string()}, {"checksum", checksum(blob)}};
  std::ofstream out(stem.string() + ".json");
  if (!out) throw Error("cannot write '" + stem.string() + ".json'");
  out << desc.dump(2) << '\n';
}

SoftmaxClassifier load_classifier(const std::filesystem::path& stem) {
  std::ifstream in(stem.string() + ".json");
  if (!in) throw LoadError("cannot open classifier descriptor '" + stem.filename().string() + ".json'");
  nlohmann::json desc;
  try {
    in >> desc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("classifier descriptor: ") + e.what());
  }
  if (desc.value("format", 0) != kModelFormat) throw FormatError("unsupported classifier format");
  if (desc.value("kind", std::string()) != "softmax") throw FormatError("descriptor is not a softmax classifier");
  const auto blob = read_blob(stem.parent_path() / desc.at("params").get<std::string>());
  if (checksum(blob) != desc.value("checksum", std::string()))
    throw IntegrityError("parameter checksum mismatch for '" + stem.filename().string() + "'");
  SoftmaxClassifier c(desc.at("classes").get<std::size_t>(), desc.at("dim").get<std::size_t>());
  c.set_parameters(std::vector<double>(blob.begin(), blob.end()));
  return c;
}

}  // namespace uom
