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
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "fednoisy/federation.hpp"
#include "fednoisy/model.hpp"
#include "fednoisy/noise.hpp"

namespace fednoisy {

// Mean of the final k evaluated test accuracies.
double last_k_average(std::span<const RoundRecord> records, std::size_t k);

// (acc_iid - acc_noniid) / acc_iid; negative when the non-iid run is better.
double accuracy_drop_ratio(double acc_iid, double acc_noniid);

// (acc(eps) - acc(eps + delta)) / delta, unclamped.
double sensitivity(double acc_at_eps, double acc_at_eps_plus_delta, double delta);

// Size-weighted mean of per-client noise ratios.
double overall_noise_ratio(std::span<const double> ratios,
                           std::span<const std::size_t> sizes);
double overall_noise_ratio(const NoiseReport& report, std::span<const std::size_t> sizes);

// ||w^t - w^{t-1}||_2 for each consecutive pair.
std::vector<double> grad_norm_series(std::span<const ModelParams> checkpoints);

enum class AccuracyScale { kPercent, kFraction };

std::string_view to_string(AccuracyScale scale);
AccuracyScale parse_accuracy_scale(std::string_view name);

// Accuracies keyed by (partition tag, noise mode, eps). Values are kept as
// entered; fraction() normalizes to [0, 1].
class AccuracyTable {
 public:
  using Key = std::tuple<std::string, std::string, double>;

  explicit AccuracyTable(AccuracyScale scale = AccuracyScale::kPercent) : scale_(scale) {}

  AccuracyScale scale() const noexcept { return scale_; }
  double scale_factor() const noexcept { return scale_ == AccuracyScale::kPercent ? 100.0 : 1.0; }

  void add(const std::string& partition, const std::string& mode, double eps, double accuracy);
  std::optional<double> value(const std::string& partition, const std::string& mode,
                              double eps) const;
  std::optional<double> fraction(const std::string& partition, const std::string& mode,
                                 double eps) const;

  const std::map<Key, double>& entries() const noexcept { return entries_; }
  bool empty() const noexcept { return entries_.empty(); }

 private:
  AccuracyScale scale_;
  std::map<Key, double> entries_;
};

// CSV with header `partition,mode,eps,accuracy`. Errors carry line numbers.
AccuracyTable parse_accuracy_table(std::string_view text, AccuracyScale scale,
                                   const std::string& source = "table");
AccuracyTable load_accuracy_table(const std::filesystem::path& path, AccuracyScale scale);

struct DropRatioRow {
  std::string partition;
  std::string mode;
  double eps = 0.0;
  double acc_iid = 0.0;
  double acc_partition = 0.0;
  double ratio = 0.0;
};

// One row per non-iid entry whose (mode, eps) also has an iid entry.
std::vector<DropRatioRow> drop_ratio_series(const AccuracyTable& table,
                                            const std::string& iid_tag = "iid");

struct SensitivityRow {
  std::string partition;
  std::string mode;
  double eps = 0.0;
  double delta = 0.0;
  double value = 0.0;  // in the table's declared scale per unit of eps
};

// Adjacent eps pairs present within each (partition, mode). Rows tagged
// `clean_mode` join every other mode's series as its eps = 0 point. Delta is
// rounded to a 1e-9 grid so 0.2 - 0.1 reads as 0.1.
std::vector<SensitivityRow> sensitivity_series(const AccuracyTable& table,
                                               const std::string& clean_mode = "clean");

struct NoiseRatioRow {
  std::size_t client = 0;
  std::size_t size = 0;
  double eps = 0.0;
  double ratio = 0.0;
};

std::vector<NoiseRatioRow> noise_ratio_series(const NoiseReport& report);

void write_drop_ratio_csv(const std::filesystem::path& path, std::span<const DropRatioRow> rows);
void write_sensitivity_csv(const std::filesystem::path& path,
                           std::span<const SensitivityRow> rows);
void write_noise_ratio_csv(const std::filesystem::path& path,
                           std::span<const NoiseRatioRow> rows);

}  // namespace fednoisy
