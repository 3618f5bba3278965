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
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "fednoisy/dataset.hpp"
#include "fednoisy/model.hpp"
#include "fednoisy/partition.hpp"
#include "fednoisy/trainer.hpp"

namespace fednoisy {

struct FedConfig {
  std::size_t num_clients = 10;
  int rounds = 10;
  double selection_fraction = 1.0;
  int local_epochs = 5;  // overrides trainer.epochs
  TrainerConfig trainer;
  ModelLayout model;
  int eval_every = 1;  // the final 10 rounds are always evaluated
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool keep_checkpoints = false;

  void validate() const;
};

struct RoundRecord {
  int round = 0;
  std::optional<double> test_accuracy;  // absent on rounds that skip evaluation
  double grad_norm = 0.0;               // ||w^t - w^{t-1}||_2
  std::vector<std::size_t> selected_clients;
  double mean_client_loss = 0.0;

  bool operator==(const RoundRecord&) const = default;
};

struct FederationResult {
  std::vector<RoundRecord> records;
  ModelParams final_params;
  // w^0 .. w^T when FedConfig::keep_checkpoints is set.
  std::vector<ModelParams> checkpoints;
};

// ceil(fraction * K), tolerant of representation error in the product.
std::size_t selection_count(std::size_t num_clients, double fraction);

// Sorted, distinct, uniform without replacement; a pure function of
// (seed, round_t).
std::vector<std::size_t> select_clients(std::size_t num_clients, double fraction,
                                        int round_t, std::uint64_t seed);

// Weighted average with weights N_k / sum(N). Evaluated as
// w_0 + sum_k c_k (w_k - w_0) in client order, so identical inputs come back
// unchanged bit for bit.
ModelParams aggregate(std::span<const ModelParams> models,
                      std::span<const double> weights);

// Fraction of argmax-correct predictions; ties go to the lowest class id.
double evaluate(const ModelParams& params, const LabeledDataset& test_set);

// Seeds used by the runtime, exposed so callers can replay a client exactly.
std::uint64_t init_seed(std::uint64_t seed);
std::uint64_t client_train_seed(std::uint64_t seed, int round_t, std::size_t client);

// FedAvg: each round selects clients, trains each from the broadcast global
// model on its (noisy) local data, aggregates by local size and evaluates on
// the clean test set. `noise_rate` is the co-teaching forget-rate fallback.
FederationResult run_federation(const LabeledDataset& train_set, const PartitionPlan& plan,
                                const FedConfig& config, const LabeledDataset& test_set,
                                std::optional<double> noise_rate = std::nullopt);

double l2_distance(const ModelParams& a, const ModelParams& b);

void write_telemetry_csv(const std::filesystem::path& path,
                         std::span<const RoundRecord> records);
std::vector<RoundRecord> read_telemetry_csv(const std::filesystem::path& path);

nlohmann::json fed_config_to_json(const FedConfig& config);
FedConfig fed_config_from_json(const nlohmann::json& doc, std::size_t input_dim,
                               std::size_t num_classes);

}  // namespace fednoisy
