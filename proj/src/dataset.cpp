/*
 * Copyright 2026 The FedNoisy-Sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fednoisy/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fednoisy/error.hpp"
#include "fednoisy/io.hpp"
#include "fednoisy/rng.hpp"

namespace fednoisy {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, ErrorKind::kShapeMismatch,
          "matrix data size does not match rows*cols");
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < rows_, ErrorKind::kIndexOutOfRange,
            "row index " + std::to_string(indices[i]) + " >= " +
                std::to_string(rows_));
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

namespace {

void check_labels(const std::vector<ClassId>& labels, int num_classes,
                  const char* what) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes, ErrorKind::kLabelRange,
            std::string(what) + " " + std::to_string(labels[i]) + " at row " +
                std::to_string(i) + " outside [0, " +
                std::to_string(num_classes) + ")");
  }
}

}  // namespace

LabeledDataset::LabeledDataset(Matrix features, std::vector<ClassId> labels,
                               int num_classes,
                               std::optional<std::vector<ClassId>> true_labels,
                               std::string name)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      true_labels_(std::move(true_labels)),
      num_classes_(num_classes),
      name_(std::move(name)) {
  require(num_classes_ >= 2, ErrorKind::kInvalidArgument,
          "num_classes must be >= 2");
  require(features_.rows() == labels_.size(), ErrorKind::kShapeMismatch,
          "feature rows and label count differ");
  check_labels(labels_, num_classes_, "label");
  if (true_labels_) {
    require(true_labels_->size() == labels_.size(), ErrorKind::kShapeMismatch,
            "true_labels length differs from labels");
    check_labels(*true_labels_, num_classes_, "true label");
  }
}

LabeledDataset LabeledDataset::relabeled(
    std::vector<ClassId> labels,
    std::optional<std::vector<ClassId>> true_labels) const {
  return LabeledDataset(features_, std::move(labels), num_classes_,
                        std::move(true_labels), name_);
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<ClassId> labels;
  labels.reserve(indices.size());
  std::optional<std::vector<ClassId>> truth;
  if (true_labels_) truth.emplace().reserve(indices.size());
  for (std::size_t idx : indices) {
    require(idx < size(), ErrorKind::kIndexOutOfRange,
            "index " + std::to_string(idx) + " >= " + std::to_string(size()));
    labels.push_back(labels_[idx]);
    if (truth) truth->push_back((*true_labels_)[idx]);
  }
  return LabeledDataset(features_.select_rows(indices), std::move(labels),
                        num_classes_, std::move(truth), name_);
}

std::size_t ClassHistogram::total() const {
  std::size_t sum = 0;
  for (auto c : counts) sum += c;
  return sum;
}

std::size_t ClassHistogram::nonzero() const {
  return static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
}

Matrix blob_means(int num_classes, std::size_t dim, double separation) {
  require(num_classes >= 2, ErrorKind::kInvalidArgument, "num_classes must be >= 2");
  require(dim >= 1, ErrorKind::kInvalidArgument, "dim must be >= 1");
  require(separation > 0.0, ErrorKind::kInvalidArgument, "separation must be > 0");
  const auto classes = static_cast<std::size_t>(num_classes);
  Matrix means(classes, dim);
  if (dim == 1) {
    const double center = 0.5 * static_cast<double>(classes - 1);
    for (std::size_t c = 0; c < classes; ++c) {
      means(c, 0) = (static_cast<double>(c) - center) * separation;
    }
  } else if (classes >= 3 && classes <= 2 * dim) {
    const double radius = separation / std::numbers::sqrt2;
    for (std::size_t c = 0; c < classes; ++c) {
      means(c, c / 2) = (c % 2 == 0) ? radius : -radius;
    }
  } else {
    const double radius =
        separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
    for (std::size_t c = 0; c < classes; ++c) {
      double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                     static_cast<double>(classes);
      means(c, 0) = radius * std::cos(angle);
      means(c, 1) = radius * std::sin(angle);
    }
  }
  return means;
}

LabeledDataset make_synthetic_blobs(int num_classes, std::size_t per_class,
                                    std::size_t dim, double separation,
                                    std::uint64_t seed) {
  require(per_class >= 1, ErrorKind::kInvalidArgument, "per_class must be >= 1");
  Matrix means = blob_means(num_classes, dim, separation);
  const auto classes = static_cast<std::size_t>(num_classes);
  Matrix features(classes * per_class, dim);
  std::vector<ClassId> labels(classes * per_class);
  Rng rng(derive_seed(seed, "blobs"));
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      std::size_t r = c * per_class + i;
      labels[r] = static_cast<ClassId>(c);
      for (std::size_t j = 0; j < dim; ++j) {
        features(r, j) = means(c, j) + rng.normal();
      }
    }
  }
  auto truth = labels;
  return LabeledDataset(std::move(features), std::move(labels), num_classes,
                        std::move(truth), "blobs");
}

namespace {

ClassId parse_label(const std::string& text, std::size_t row, std::size_t col) {
  long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorKind::kParse, "row " + std::to_string(row) + " column " +
                                       std::to_string(col) +
                                       ": expected integer label, got '" + text + "'");
  }
  return static_cast<ClassId>(value);
}

double parse_real(const std::string& text, std::size_t row, std::size_t col) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorKind::kParse, "row " + std::to_string(row) + " column " +
                                       std::to_string(col) +
                                       ": expected real, got '" + text + "'");
  }
  return value;
}

}  // namespace

LabeledDataset load_csv(const std::filesystem::path& path,
                        const std::string& label_column) {
  CsvOptions options;
  options.label_column = label_column;
  return load_csv(path, options);
}

LabeledDataset load_csv(const std::filesystem::path& path,
                        const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::kParse, path.string() + ": missing header row");
  }
  auto header = split_csv_line(line);
  std::optional<std::size_t> label_col;
  std::optional<std::size_t> truth_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == options.label_column) label_col = i;
    if (options.true_label_column && header[i] == *options.true_label_column) {
      truth_col = i;
    }
  }
  if (!label_col) {
    throw Error(ErrorKind::kParse, path.string() + ": no label column '" +
                                       options.label_column + "'");
  }
  if (options.true_label_column && !truth_col) {
    throw Error(ErrorKind::kParse, path.string() + ": no true-label column '" +
                                       *options.true_label_column + "'");
  }
  const std::size_t dim = header.size() - 1 - (truth_col ? 1 : 0);

  std::vector<double> values;
  std::vector<ClassId> labels;
  std::vector<ClassId> truth;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::kParse, "row " + std::to_string(row) + ": expected " +
                                         std::to_string(header.size()) +
                                         " columns, got " +
                                         std::to_string(fields.size()));
    }
    for (std::size_t col = 0; col < fields.size(); ++col) {
      if (col == *label_col) {
        labels.push_back(parse_label(fields[col], row, col + 1));
      } else if (truth_col && col == *truth_col) {
        truth.push_back(parse_label(fields[col], row, col + 1));
      } else {
        values.push_back(parse_real(fields[col], row, col + 1));
      }
    }
  }

  int num_classes = 0;
  if (options.num_classes) {
    num_classes = *options.num_classes;
  } else {
    ClassId max_label = -1;
    for (ClassId y : labels) {
      if (y < 0) {
        throw Error(ErrorKind::kLabelRange, "negative label " + std::to_string(y));
      }
      max_label = std::max(max_label, y);
    }
    for (ClassId y : truth) max_label = std::max(max_label, y);
    num_classes = max_label + 1;
    std::vector<bool> seen(static_cast<std::size_t>(std::max(num_classes, 0)), false);
    for (ClassId y : labels) seen[static_cast<std::size_t>(y)] = true;
    for (ClassId y : truth) {
      if (y >= 0) seen[static_cast<std::size_t>(y)] = true;
    }
    for (std::size_t c = 0; c < seen.size(); ++c) {
      if (!seen[c]) {
        throw Error(ErrorKind::kLabelRange,
                    path.string() + ": labels are not contiguous from 0 (class " +
                        std::to_string(c) + " absent, max " +
                        std::to_string(max_label) + ")");
      }
    }
  }
  if (num_classes < 2) {
    throw Error(ErrorKind::kLabelRange,
                path.string() + ": need at least two classes");
  }
  const std::size_t n = labels.size();
  std::optional<std::vector<ClassId>> truth_opt;
  if (truth_col) truth_opt = std::move(truth);
  return LabeledDataset(Matrix(n, dim, std::move(values)), std::move(labels),
                        num_classes, std::move(truth_opt), path.stem().string());
}

void save_csv(const LabeledDataset& ds, const std::filesystem::path& path,
              const std::string& label_column,
              const std::string& true_label_column) {
  std::ostringstream out;
  for (std::size_t j = 0; j < ds.dim(); ++j) out << 'x' << j << ',';
  out << label_column;
  if (ds.has_true_labels()) out << ',' << true_label_column;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.features().row(i)) out << format_real(v) << ',';
    out << ds.labels()[i];
    if (ds.has_true_labels()) out << ',' << (*ds.true_labels())[i];
    out << '\n';
  }
  write_text_file(path, out.str());
}

ClassHistogram class_histogram(const LabeledDataset& ds,
                               std::optional<std::span<const std::size_t>> indices) {
  ClassHistogram hist;
  hist.counts.assign(static_cast<std::size_t>(ds.num_classes()), 0);
  const auto& labels = ds.labels();
  if (!indices) {
    for (ClassId y : labels) ++hist.counts[static_cast<std::size_t>(y)];
    return hist;
  }
  for (std::size_t idx : *indices) {
    require(idx < labels.size(), ErrorKind::kIndexOutOfRange,
            "index " + std::to_string(idx) + " >= " + std::to_string(labels.size()));
    ++hist.counts[static_cast<std::size_t>(labels[idx])];
  }
  return hist;
}

}  // namespace fednoisy
