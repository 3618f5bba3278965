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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fednoisy/matrix.hpp"

namespace fednoisy {

using ClassId = int;

// Features plus observed labels, optionally paired with the ground-truth labels
// they were corrupted from. Immutable once built; every constructor path
// validates the shape and label-range invariants.
class LabeledDataset {
 public:
  LabeledDataset(Matrix features, std::vector<ClassId> labels, int num_classes,
                 std::optional<std::vector<ClassId>> true_labels = std::nullopt,
                 std::string name = "dataset");

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return features_.cols(); }
  int num_classes() const noexcept { return num_classes_; }
  const std::string& name() const noexcept { return name_; }

  const Matrix& features() const noexcept { return features_; }
  const std::vector<ClassId>& labels() const noexcept { return labels_; }
  const std::optional<std::vector<ClassId>>& true_labels() const noexcept {
    return true_labels_;
  }
  bool has_true_labels() const noexcept { return true_labels_.has_value(); }

  // Same features with replaced observed labels and ground truth.
  LabeledDataset relabeled(std::vector<ClassId> labels,
                           std::optional<std::vector<ClassId>> true_labels) const;

  // Rows in `indices` order; keeps the global class count.
  LabeledDataset subset(std::span<const std::size_t> indices) const;

  bool operator==(const LabeledDataset&) const = default;

 private:
  Matrix features_;
  std::vector<ClassId> labels_;
  std::optional<std::vector<ClassId>> true_labels_;
  int num_classes_;
  std::string name_;
};

struct ClassHistogram {
  std::vector<std::size_t> counts;

  std::size_t total() const;
  std::size_t nonzero() const;
};

// Class means used by make_synthetic_blobs. Seed-independent, so train and
// test sets generated with different seeds share the same geometry:
//   dim == 1:                  evenly spaced points on the line
//   3 <= num_classes <= 2*dim: +-(s/sqrt2) on the coordinate axes
//   otherwise:                 regular polygon in the first two coordinates
// In every case the closest pair of means is exactly `separation` apart.
Matrix blob_means(int num_classes, std::size_t dim, double separation);

// Balanced isotropic unit-variance Gaussian blobs; true_labels == labels.
LabeledDataset make_synthetic_blobs(int num_classes, std::size_t per_class,
                                    std::size_t dim, double separation,
                                    std::uint64_t seed);

struct CsvOptions {
  std::string label_column = "label";
  // Column holding ground-truth labels; excluded from the features.
  std::optional<std::string> true_label_column;
  // When set, labels must lie in [0, num_classes) but need not all occur.
  std::optional<int> num_classes;
};

LabeledDataset load_csv(const std::filesystem::path& path,
                        const std::string& label_column);
LabeledDataset load_csv(const std::filesystem::path& path,
                        const CsvOptions& options);

// Writes x0..x{d-1}, the label column and (when present) the true-label
// column. Reals use the shortest exact spelling, so load_csv round-trips.
void save_csv(const LabeledDataset& ds, const std::filesystem::path& path,
              const std::string& label_column = "label",
              const std::string& true_label_column = "true_label");

ClassHistogram class_histogram(
    const LabeledDataset& ds,
    std::optional<std::span<const std::size_t>> indices = std::nullopt);

}  // namespace fednoisy
