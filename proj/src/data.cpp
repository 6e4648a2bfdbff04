#include "uom/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uom/error.hpp"

namespace uom {

namespace fs = std::filesystem;
using nlohmann::json;

DataMatrix::DataMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

DataMatrix::DataMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_)
    throw ArgumentError("DataMatrix: " + std::to_string(values_.size()) + " values for a " +
                        std::to_string(rows_) + "x" + std::to_string(cols_) + " matrix");
  validate();
}

DataMatrix DataMatrix::from_eigen(const RowMatrix& m) {
  const auto r = static_cast<std::size_t>(m.rows());
  const auto c = static_cast<std::size_t>(m.cols());
  return DataMatrix(r, c, std::vector<double>(m.data(), m.data() + m.size()));
}

const std::vector<int>& DataMatrix::labels() const {
  if (!labels_) throw ArgumentError("dataset has no labels");
  return *labels_;
}

void DataMatrix::set_labels(std::vector<int> labels) {
  if (labels.size() != rows_)
    throw ArgumentError("label count " + std::to_string(labels.size()) + " does not match " +
                        std::to_string(rows_) + " rows");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0) throw ArgumentError("negative label at row " + std::to_string(i));
  labels_ = std::move(labels);
}

void DataMatrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_)
    throw ArgumentError("append_row: expected " + std::to_string(cols_) + " values, got " +
                        std::to_string(values.size()));
  values_.insert(values_.end(), values.begin(), values.end());
  ++rows_;
  if (labels_) labels_->push_back(0);
}

void DataMatrix::validate() const {
  for (std::size_t idx = 0; idx < values_.size(); ++idx) {
    if (!std::isfinite(values_[idx]))
      throw ValidationError("non-finite value at row " + std::to_string(idx / cols_) +
                            ", column " + std::to_string(idx % cols_));
  }
  if (labels_ && labels_->size() != rows_)
    throw ValidationError("label count does not match row count");
}

GroupIndex GroupIndex::from_assignment(std::vector<std::size_t> assignment, std::size_t L) {
  GroupIndex g;
  g.L = L;
  g.sizes.assign(L, 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= L)
      throw IndexError("assignment[" + std::to_string(i) + "] = " +
                       std::to_string(assignment[i]) + " is not below L = " + std::to_string(L));
    ++g.sizes[assignment[i]];
  }
  for (std::size_t l = 0; l < L; ++l)
    if (g.sizes[l] == 0) throw ValidationError("group " + std::to_string(l) + " is empty");
  g.assignment = std::move(assignment);
  return g;
}

GroupIndex GroupIndex::from_labels(std::span<const int> labels) {
  std::vector<int> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<std::size_t> assignment(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw ArgumentError("negative label at row " + std::to_string(i));
    assignment[i] = static_cast<std::size_t>(
        std::lower_bound(distinct.begin(), distinct.end(), labels[i]) - distinct.begin());
  }
  return from_assignment(std::move(assignment), distinct.size());
}

GroupIndex GroupIndex::single(std::size_t n) {
  return from_assignment(std::vector<std::size_t>(n, 0), 1);
}

FileFormat format_from_path(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv" || ext == ".txt") return FileFormat::csv;
  if (ext == ".f32" || ext == ".bin" || ext == ".raw") return FileFormat::raw_f32;
  throw ArgumentError("cannot infer dataset format from extension '" + ext + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

std::string fields_phrase(std::size_t n) {
  return std::to_string(n) + (n == 1 ? " field" : " fields");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::ifstream open_input(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

DataMatrix load_csv(const fs::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  std::optional<std::size_t> label_col;
  bool first = true;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t rows = 0;
  std::vector<double> row_buf;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (first) {
      first = false;
      width = fields.size();
      bool numeric = true;
      double tmp = 0.0;
      for (auto f : fields) numeric = numeric && parse_double(f, tmp);
      if (!numeric) {
        for (std::size_t c = 0; c < fields.size(); ++c)
          if (fields[c] == "label") label_col = c;
        continue;
      }
    }
    if (fields.size() != width)
      throw ParseError("row " + std::to_string(line_no) + " has " + fields_phrase(fields.size()) +
                       ", expected " + std::to_string(width));
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v))
        throw ParseError("row " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                         ": cannot parse '" + std::string(fields[c]) + "'");
      if (label_col && c == *label_col) {
        if (v < 0 || v != std::floor(v))
          throw ParseError("row " + std::to_string(line_no) + ": label must be a non-negative integer");
        labels.push_back(static_cast<int>(v));
        continue;
      }
      if (!std::isfinite(v))
        throw ValidationError("non-finite value at row " + std::to_string(rows) + ", column " +
                              std::to_string(c) + " (line " + std::to_string(line_no) + ")");
      values.push_back(v);
    }
    ++rows;
  }
  const std::size_t cols = label_col ? width - 1 : width;
  DataMatrix x(rows, cols, std::move(values));
  if (label_col) x.set_labels(std::move(labels));
  return x;
}

void save_csv(const DataMatrix& x, const fs::path& path) {
  auto out = open_output(path);
  if (x.has_labels() || x.cols() == 0) {
    for (std::size_t j = 0; j < x.cols(); ++j) out << 'x' << j << ',';
    out << "label\n";
  }
  std::string line;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    line.clear();
    const auto r = x.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) line += ',';
      line += format_double(r[j]);
    }
    if (x.has_labels()) {
      if (!r.empty()) line += ',';
      line += std::to_string(x.labels()[i]);
    }
    line += '\n';
    out << line;
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

DataMatrix load_raw(const fs::path& path) {
  json header;
  {
    auto in = open_input(sidecar_path(path));
    try {
      in >> header;
    } catch (const json::exception& e) {
      throw ParseError("sidecar '" + sidecar_path(path).string() + "': " + e.what());
    }
  }
  std::size_t n = 0, d = 0;
  try {
    n = header.at("n").get<std::size_t>();
    d = header.at("D").get<std::size_t>();
    if (header.value("dtype", std::string("f32")) != "f32")
      throw FormatError("unsupported dtype '" + header.value("dtype", std::string()) + "'");
    if (header.value("order", std::string("row-major")) != "row-major")
      throw FormatError("unsupported order '" + header.value("order", std::string()) + "'");
  } catch (const json::exception& e) {
    throw FormatError(std::string("sidecar: ") + e.what());
  }
  const auto bytes = fs::file_size(path);
  if (bytes != n * d * sizeof(float))
    throw FormatError("'" + path.filename().string() + "' holds " + std::to_string(bytes / 4) +
                      " values but header declares n*D = " + std::to_string(n * d));
  auto in = open_input(path, std::ios::binary);
  std::vector<float> buf(n * d);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw LoadError("short read on '" + path.string() + "'");
  std::vector<double> values(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    float f = buf[i];
    if constexpr (std::endian::native == std::endian::big) {
      auto bits = std::bit_cast<std::uint32_t>(f);
      bits = __builtin_bswap32(bits);
      f = std::bit_cast<float>(bits);
    }
    values[i] = f;
  }
  DataMatrix x(n, d, std::move(values));
  if (header.contains("label")) {
    const auto& lab = header["label"];
    if (lab.is_array()) {
      x.set_labels(lab.get<std::vector<int>>());
    } else if (lab.is_string()) {
      x.set_labels(load_labels(path.parent_path() / lab.get<std::string>()));
    } else {
      throw FormatError("sidecar 'label' must be an array or a file name");
    }
  }
  return x;
}

void save_raw(const DataMatrix& x, const fs::path& path) {
  {
    auto out = open_output(path, std::ios::binary);
    std::vector<float> buf(x.values().begin(), x.values().end());
    if constexpr (std::endian::native == std::endian::big) {
      for (auto& f : buf) f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw Error("write failed for '" + path.string() + "'");
  }
  json header = {{"n", x.rows()}, {"D", x.cols()}, {"dtype", "f32"}, {"order", "row-major"}};
  if (x.has_labels()) header["label"] = x.labels();
  auto out = open_output(sidecar_path(path));
  out << header.dump(2) << '\n';
}

}  // namespace

DataMatrix load_dataset(const fs::path& path, FileFormat format) {
  return format == FileFormat::csv ? load_csv(path) : load_raw(path);
}

DataMatrix load_dataset(const fs::path& path) { return load_dataset(path, format_from_path(path)); }

void save_dataset(const DataMatrix& x, const fs::path& path, FileFormat format) {
  if (format == FileFormat::csv)
    save_csv(x, path);
  else
    save_raw(x, path);
}

void save_dataset(const DataMatrix& x, const fs::path& path) {
  save_dataset(x, path, format_from_path(path));
}

std::vector<int> load_labels(const fs::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<int> labels;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto s = trim(line);
    if (s.empty()) continue;
    if (s.find(',') != std::string_view::npos)
      throw ParseError("labels row " + std::to_string(line_no) + " has more than one field");
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw ParseError("labels row " + std::to_string(line_no) + ": cannot parse '" +
                       std::string(s) + "'");
    }
    first = false;
    if (v < 0) throw ParseError("labels row " + std::to_string(line_no) + ": negative label");
    labels.push_back(v);
  }
  return labels;
}

void save_labels(std::span<const int> labels, const fs::path& path, const std::string& header) {
  auto out = open_output(path);
  if (!header.empty()) out << header << '\n';
  for (int v : labels) out << v << '\n';
}

std::vector<DataMatrix> split_by_group(const DataMatrix& x, const GroupIndex& g) {
  if (g.assignment.size() != x.rows())
    throw ArgumentError("group assignment has " + std::to_string(g.assignment.size()) +
                        " entries for " + std::to_string(x.rows()) + " rows");
  std::vector<std::vector<double>> values(g.L);
  std::vector<std::vector<int>> labels(g.L);
  std::vector<std::size_t> counts(g.L, 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto l = g.assignment[i];
    if (l >= g.L)
      throw IndexError("assignment[" + std::to_string(i) + "] = " + std::to_string(l) +
                       " is not below L = " + std::to_string(g.L));
    const auto r = x.row(i);
    values[l].insert(values[l].end(), r.begin(), r.end());
    if (x.has_labels()) labels[l].push_back(x.labels()[i]);
    ++counts[l];
  }
  std::vector<DataMatrix> out;
  out.reserve(g.L);
  for (std::size_t l = 0; l < g.L; ++l) {
    out.emplace_back(counts[l], x.cols(), std::move(values[l]));
    if (x.has_labels()) out.back().set_labels(std::move(labels[l]));
  }
  return out;
}

DataMatrix slice_rows(const DataMatrix& x, std::size_t first, std::size_t count) {
  if (first + count > x.rows()) throw ArgumentError("slice_rows: range exceeds matrix");
  const auto begin = x.values().begin() + static_cast<std::ptrdiff_t>(first * x.cols());
  DataMatrix out(count, x.cols(),
                 std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * x.cols())));
  if (x.has_labels()) {
    const auto lb = x.labels().begin() + static_cast<std::ptrdiff_t>(first);
    out.set_labels(std::vector<int>(lb, lb + static_cast<std::ptrdiff_t>(count)));
  }
  return out;
}

DataMatrix concat_rows(std::span<const DataMatrix> parts) {
  if (parts.empty()) return {};
  const std::size_t cols = parts.front().cols();
  std::vector<double> values;
  std::vector<int> labels;
  bool all_labeled = true;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ArgumentError("concat_rows: column count mismatch");
    values.insert(values.end(), p.values().begin(), p.values().end());
    rows += p.rows();
    all_labeled = all_labeled && p.has_labels();
    if (p.has_labels()) labels.insert(labels.end(), p.labels().begin(), p.labels().end());
  }
  DataMatrix out(rows, cols, std::move(values));
  if (all_labeled) out.set_labels(std::move(labels));
  return out;
}

}  // namespace uom
