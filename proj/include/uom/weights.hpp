#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "uom/data.hpp"

namespace uom {

struct ClassWeights {
  std::vector<double> omega;
  [[nodiscard]] std::size_t L() const noexcept { return omega.size(); }
};

/// omega_l = L * d_l / sum(d).
ClassWeights id_weights(std::span<const double> d_hats);

struct SoftmaxConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// Linear softmax: logits = W x + b with W stored L x D.
class SoftmaxClassifier {
 public:
  SoftmaxClassifier() = default;
  SoftmaxClassifier(std::size_t classes, std::size_t dim);

  [[nodiscard]] std::size_t classes() const noexcept { return classes_; }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }

  /// Flat layout: W row-major, then b.
  [[nodiscard]] const std::vector<double>& parameters() const noexcept { return params_; }
  void set_parameters(std::vector<double> params);

  [[nodiscard]] std::size_t predict(std::span<const double> x) const;

  /// Mean over `rows` of omega[y] * (-log softmax_y). An empty omega is the
  /// standard cross entropy. Gradient has the layout of parameters().
  double loss(const DataMatrix& x, std::span<const int> labels, std::span<const double> omega,
              std::span<const std::size_t> rows, std::vector<double>* gradient = nullptr) const;
  double loss(const DataMatrix& x, std::span<const int> labels, std::span<const double> omega,
              std::vector<double>* gradient = nullptr) const;

 private:
  std::size_t classes_ = 0, dim_ = 0;
  std::vector<double> params_;
};

struct SoftmaxFit {
  SoftmaxClassifier classifier;
  std::vector<double> loss_trace;  ///< full-data loss before training and after each epoch
};

/// `omega` empty trains on the unweighted cross entropy.
SoftmaxFit train_softmax_weighted(const DataMatrix& x, std::span<const int> labels, std::size_t classes,
                                  const std::optional<ClassWeights>& omega, const SoftmaxConfig& cfg);

/// Empty entry for a class with no points.
std::vector<std::optional<double>> per_class_accuracy(const SoftmaxClassifier& c, const DataMatrix& x,
                                                      std::span<const int> labels);

void save_class_weights(const ClassWeights& w, std::span<const double> d_hats, const std::filesystem::path& path);
/// Writes stem.json + stem.params.
void save_classifier(const SoftmaxClassifier& c, const std::filesystem::path& stem);
SoftmaxClassifier load_classifier(const std::filesystem::path& stem);

}  // namespace uom
