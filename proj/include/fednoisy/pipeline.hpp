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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fednoisy/analysis.hpp"
#include "fednoisy/dataset.hpp"
#include "fednoisy/federation.hpp"
#include "fednoisy/noise.hpp"
#include "fednoisy/partition.hpp"

namespace fednoisy {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct DatasetConfig {
  enum class Source { kSynthetic, kCsv };
  Source source = Source::kSynthetic;

  int num_classes = 4;
  std::size_t per_class = 1000;
  std::size_t test_per_class = 250;
  std::size_t dim = 2;
  double separation = 4.0;

  std::string path;
  std::string test_path;
  std::string label_column = "label";
  std::optional<std::string> true_label_column;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "fednoisy-out";
  int repeats = 1;
  DatasetConfig dataset;
  PartitionParams partition;
  NoiseSpec noise;
  FedConfig federation;
  // Learning rates to sweep; the best mean last-10 accuracy is selected.
  std::vector<double> lr_grid;
};

// Unset partition/noise seeds are derived from the top-level seed. Every
// failure is reported as ErrorKind::kConfig naming the offending field.
RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json run_config_to_json(const RunConfig& config);
nlohmann::json load_config_document(const std::filesystem::path& path);

std::uint64_t dataset_seed(std::uint64_t seed);
std::uint64_t test_set_seed(std::uint64_t seed);
std::uint64_t repeat_seed(std::uint64_t seed, int repeat);

struct DataPair {
  LabeledDataset train;
  LabeledDataset test;
};

// Synthetic blobs, or the configured CSV files.
DataPair build_dataset(const RunConfig& config);

// Stage outputs, all below config.output_dir:
//   data/          train.csv test.csv (synthetic source only)
//   partition/     plan.json histograms.csv manifest.json
//   noise/         noisy_train.csv plan.json manifest.json
//   train/         [lr_<v>/]repeat_<r>/{telemetry.csv,final.ckpt,run_manifest.json}
//                  summary.csv
//   analysis/      last10.csv grad_norm.csv noise_ratio.csv drop_ratio.csv
//                  sensitivity.csv accuracy_table.csv
//   run.json       (pipeline only)
void cmd_partition(const RunConfig& config);
void cmd_noise(const RunConfig& config);

struct SummaryRow {
  double lr = 0.0;
  int repeats = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over repeats
  bool selected = false;
};

std::vector<SummaryRow> cmd_train(const RunConfig& config);

struct AnalyzeInputs {
  std::vector<std::filesystem::path> telemetry;
  std::optional<std::filesystem::path> table;
  AccuracyScale table_scale = AccuracyScale::kPercent;
  std::optional<std::filesystem::path> noise_manifest;
  std::filesystem::path output_dir;
};

void cmd_analyze(const AnalyzeInputs& inputs);
// Analysis over the artifacts of a finished train stage.
void analyze_run(const RunConfig& config);

void cmd_pipeline(const RunConfig& config);

// 0 success, 2 config validation, 3 artifact mismatch, 4 numerical abort,
// 1 anything else.
int exit_code_for(const std::exception& error);

}  // namespace fednoisy
