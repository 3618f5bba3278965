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
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fednoisy/dataset.hpp"
#include "fednoisy/matrix.hpp"
#include "fednoisy/partition.hpp"

namespace fednoisy {

// Row-stochastic flip table: probs(i, j) = P(observed = j | true = i).
// `class_ids` maps rows/columns to global class ids for matrices built over a
// client's local class subset; absent means row i is class i.
struct TransitionMatrix {
  Matrix probs;
  std::optional<std::vector<ClassId>> class_ids;

  std::size_t size() const noexcept { return probs.rows(); }
  ClassId class_at(std::size_t row) const;
  // Row of `label`, or nullopt when the matrix does not cover it.
  std::optional<std::size_t> row_of(ClassId label) const;
};

using CountMatrix = std::vector<std::vector<std::size_t>>;

// i -> (i + 1) mod C.
std::vector<ClassId> cyclic_target_map(int num_classes);

TransitionMatrix symmetric_matrix(int num_classes, double eps);
TransitionMatrix asymmetric_matrix(int num_classes, double eps,
                                   std::span<const ClassId> target_map);

// Matrices over a sorted subset of global classes. The symmetric variant
// spreads eps over |classes| - 1 targets.
TransitionMatrix local_symmetric_matrix(std::vector<ClassId> classes, double eps);
TransitionMatrix local_asymmetric_matrix(std::vector<ClassId> classes, double eps,
                                         const std::map<ClassId, ClassId>& target);

// Next class in the sorted local list, cyclically.
std::map<ClassId, ClassId> localized_asym_target(std::span<const ClassId> local_classes);

// Each observed label is drawn from the row of its current label using a
// uniform that depends only on (seed, sample index). The result keeps
// true_labels = input labels. flip_counts is indexed [true][observed].
std::pair<LabeledDataset, CountMatrix> apply_noise(const LabeledDataset& ds,
                                                   const TransitionMatrix& matrix,
                                                   std::uint64_t seed);

enum class NoiseScene { kClean, kGlobalized, kLocalized, kRealWorld };
enum class NoiseMode { kNone, kSymmetric, kAsymmetric };

std::string_view to_string(NoiseScene scene);
std::string_view to_string(NoiseMode mode);
NoiseScene parse_noise_scene(std::string_view name);
NoiseMode parse_noise_mode(std::string_view name);

struct NoiseSpec {
  NoiseScene scene = NoiseScene::kClean;
  NoiseMode mode = NoiseMode::kNone;
  std::optional<double> eps_global;
  std::optional<double> eps_min;
  std::optional<double> eps_max;
  // Globalized asymmetric target map; defaults to cyclic_target_map.
  std::optional<std::vector<ClassId>> asym_map;
  std::uint64_t seed = 0;

  void validate() const;
  // Expected corruption rate: eps_global, or the midpoint of [eps_min, eps_max].
  double nominal_rate() const;
};

struct NoiseReport {
  std::vector<double> per_client_ratio;
  double overall_ratio = 0.0;
  std::vector<double> per_client_eps;
  CountMatrix flip_counts;
  std::vector<std::size_t> per_client_flips;
  std::vector<std::size_t> client_sizes;
  // Localized scene: clients holding a single clean class, left uncorrupted.
  std::vector<std::size_t> single_class_clients;
};

// Post-hoc accounting over the samples assigned by `plan`; requires
// true_labels.
NoiseReport compute_noise_report(const LabeledDataset& noisy, const PartitionPlan& plan,
                                 std::vector<double> per_client_eps);

struct SceneResult {
  PartitionPlan plan;
  LabeledDataset dataset;
  std::optional<NoiseReport> report;
};

// Corrupt the global dataset with one matrix, then partition the noisy labels.
SceneResult globalized_scene(const LabeledDataset& ds, const NoiseSpec& spec,
                             const PartitionParams& partition);

// Partition the clean dataset, then corrupt each client over its own classes
// with eps_k ~ U(eps_min, eps_max).
SceneResult localized_scene(const LabeledDataset& ds, const NoiseSpec& spec,
                            const PartitionParams& partition);

// Partition an already-noisy dataset. The report is present only when
// ground-truth labels are known.
SceneResult realworld_scene(const LabeledDataset& ds, const PartitionParams& partition);

// Partition-first scenes applied to an existing plan.
SceneResult localized_on_plan(const LabeledDataset& ds, const NoiseSpec& spec,
                              PartitionPlan plan);
SceneResult realworld_on_plan(const LabeledDataset& ds, PartitionPlan plan);
SceneResult clean_on_plan(const LabeledDataset& ds, PartitionPlan plan);
// Rejects the globalized scene.
SceneResult run_scene_on_plan(const LabeledDataset& ds, const NoiseSpec& spec,
                              PartitionPlan plan);

// Dispatch on spec.scene. The clean scene partitions and reports zero noise.
SceneResult run_scene(const LabeledDataset& ds, const NoiseSpec& spec,
                      const PartitionParams& partition);

nlohmann::json noise_spec_to_json(const NoiseSpec& spec);
NoiseSpec noise_spec_from_json(const nlohmann::json& doc);

nlohmann::json noise_manifest(const NoiseSpec& spec,
                              const std::optional<NoiseReport>& report);
NoiseReport noise_report_from_json(const nlohmann::json& manifest);

}  // namespace fednoisy
