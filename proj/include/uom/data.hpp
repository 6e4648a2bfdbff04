#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace uom {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n x D row-major matrix of finite reals with optional per-row labels.
class DataMatrix {
 public:
  DataMatrix() = default;
  /// Zero-filled matrix.
  DataMatrix(std::size_t rows, std::size_t cols);
  /// Takes ownership of `values` (row-major). Throws ValidationError on a
  /// non-finite entry and ArgumentError on a size mismatch.
  DataMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static DataMatrix from_eigen(const RowMatrix& m);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) noexcept { return {values_.data() + i * cols_, cols_}; }

  double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) noexcept { return values_[i * cols_ + j]; }

  const std::vector<double>& values() const noexcept { return values_; }

  Eigen::Map<const RowMatrix> eigen() const {
    return {values_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }
  Eigen::Map<RowMatrix> eigen() {
    return {values_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }

  bool has_labels() const noexcept { return labels_.has_value(); }
  const std::vector<int>& labels() const;
  /// Throws ArgumentError if the length differs from rows() or a label is negative.
  void set_labels(std::vector<int> labels);
  void clear_labels() noexcept { labels_.reset(); }

  /// Appends one row; `values` must have cols() entries (or define cols() when empty).
  void append_row(std::span<const double> values);

  /// Throws ValidationError naming the first non-finite entry.
  void validate() const;

  friend bool operator==(const DataMatrix&, const DataMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
  std::optional<std::vector<int>> labels_;
};

/// Partition of n rows into L non-empty groups.
struct GroupIndex {
  std::size_t L = 0;
  std::vector<std::size_t> assignment;
  std::vector<std::size_t> sizes;

  /// Throws IndexError for a value >= L and ValidationError for an empty group.
  static GroupIndex from_assignment(std::vector<std::size_t> assignment, std::size_t L);
  /// Groups are the distinct label values, numbered in ascending label order.
  static GroupIndex from_labels(std::span<const int> labels);
  static GroupIndex single(std::size_t n);

  std::size_t n() const noexcept { return assignment.size(); }
};

enum class FileFormat { csv, raw_f32 };

/// csv for ".csv"/".txt", raw_f32 for ".f32"/".bin"/".raw".
FileFormat format_from_path(const std::filesystem::path& path);

/// Loads a dataset.
///
/// CSV: comma separated, one row per line. A first row that does not parse as
/// numbers is treated as a header; a header column named "label" is read as
/// the label column.
///
/// raw_f32: little-endian float32 values at `path`, described by the JSON
/// sidecar `path + ".json"`: {"n", "D", "dtype": "f32", "order": "row-major"}
/// and optionally "label" as an inline integer array or the name of a
/// single-column CSV next to the sidecar.
DataMatrix load_dataset(const std::filesystem::path& path, FileFormat format);
DataMatrix load_dataset(const std::filesystem::path& path);

/// CSV values are written in shortest round-trip form, so load(save(X)) == X.
/// raw_f32 narrows to float; values that are not float-representable are rounded.
void save_dataset(const DataMatrix& x, const std::filesystem::path& path, FileFormat format);
void save_dataset(const DataMatrix& x, const std::filesystem::path& path);

/// Single-column integer CSV (optional header).
std::vector<int> load_labels(const std::filesystem::path& path);
void save_labels(std::span<const int> labels, const std::filesystem::path& path,
                 const std::string& header = "label");

/// Rows of `x` split by group, original order kept within each group.
/// Labels, if present, are carried along.
std::vector<DataMatrix> split_by_group(const DataMatrix& x, const GroupIndex& g);

/// Rows `first..first+count` of `x`.
DataMatrix slice_rows(const DataMatrix& x, std::size_t first, std::size_t count);
/// Row concatenation; labels kept only if every input has them.
DataMatrix concat_rows(std::span<const DataMatrix> parts);

}  // namespace uom
