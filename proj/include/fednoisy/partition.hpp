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
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fednoisy/dataset.hpp"
#include "fednoisy/rng.hpp"

namespace fednoisy {

enum class PartitionScheme { kIid, kQuantitySkew, kLabelDirichlet, kLabelQuantity };

// Canonical names: iid, noniid-quantity, noniid-labeldir, noniid-#label.
std::string_view to_string(PartitionScheme scheme);
PartitionScheme parse_partition_scheme(std::string_view name);

struct PartitionParams {
  PartitionScheme scheme = PartitionScheme::kIid;
  std::size_t num_clients = 10;
  double alpha = 0.0;          // quantity / label-dir concentration
  int classes_per_client = 0;  // label-quantity c
  std::uint64_t seed = 0;
};

// Client -> sample indices. Lists are disjoint, sorted ascending and
// non-empty; indices left out by floor division are simply absent.
struct PartitionPlan {
  PartitionScheme scheme = PartitionScheme::kIid;
  double alpha = 0.0;
  int classes_per_client = 0;
  // Seed that produced the plan. After degenerate redraws this is the
  // requested seed plus the number of redraws.
  std::uint64_t seed = 0;
  std::size_t num_samples = 0;
  std::vector<std::vector<std::size_t>> clients;

  std::size_t num_clients() const noexcept { return clients.size(); }
  std::vector<std::size_t> sizes() const;
  std::size_t assigned() const;

  bool operator==(const PartitionPlan&) const = default;
};

// Dirichlet(alpha, ..., alpha) over k coordinates. Swappable in tests.
using DirichletSampler =
    std::function<std::vector<double>(std::size_t k, double alpha, Rng& rng)>;

std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng);

// Redraw budget for schemes that can yield an empty client.
inline constexpr int kMaxPartitionRedraws = 10000;

PartitionPlan partition_iid(const LabeledDataset& ds, std::size_t num_clients,
                            std::uint64_t seed);

PartitionPlan partition_quantity_skew(const LabeledDataset& ds,
                                      std::size_t num_clients, double alpha,
                                      std::uint64_t seed,
                                      const DirichletSampler& sampler = sample_dirichlet);

PartitionPlan partition_label_dirichlet(
    const LabeledDataset& ds, std::size_t num_clients, double alpha,
    std::uint64_t seed, const DirichletSampler& sampler = sample_dirichlet);

PartitionPlan partition_label_quantity(const LabeledDataset& ds,
                                       std::size_t num_clients,
                                       int classes_per_client, std::uint64_t seed);

PartitionPlan make_partition(const LabeledDataset& ds, const PartitionParams& params);

// Client k's local dataset, keeping the global class count.
LabeledDataset restrict_client(const LabeledDataset& ds, const PartitionPlan& plan,
                               std::size_t k);

// Throws unless the plan is disjoint, in range for `num_samples` and has no
// empty client.
void validate_plan(const PartitionPlan& plan, std::size_t num_samples);

nlohmann::json plan_to_json(const PartitionPlan& plan);
PartitionPlan plan_from_json(const nlohmann::json& doc);
void save_plan(const PartitionPlan& plan, const std::filesystem::path& path);
PartitionPlan load_plan(const std::filesystem::path& path);

}  // namespace fednoisy
