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

#include "fednoisy/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "fednoisy/error.hpp"
#include "fednoisy/io.hpp"

namespace fednoisy {

std::string_view to_string(PartitionScheme scheme) {
  switch (scheme) {
    case PartitionScheme::kIid: return "iid";
    case PartitionScheme::kQuantitySkew: return "noniid-quantity";
    case PartitionScheme::kLabelDirichlet: return "noniid-labeldir";
    case PartitionScheme::kLabelQuantity: return "noniid-#label";
  }
  return "iid";
}

PartitionScheme parse_partition_scheme(std::string_view name) {
  if (name == "iid") return PartitionScheme::kIid;
  if (name == "noniid-quantity" || name == "quantity-skew") {
    return PartitionScheme::kQuantitySkew;
  }
  if (name == "noniid-labeldir" || name == "label-dir") {
    return PartitionScheme::kLabelDirichlet;
  }
  if (name == "noniid-#label" || name == "noniid-label-count" ||
      name == "label-quantity") {
    return PartitionScheme::kLabelQuantity;
  }
  throw Error(ErrorKind::kInvalidArgument,
              "unknown partition scheme '" + std::string(name) + "'");
}

std::vector<std::size_t> PartitionPlan::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(clients.size());
  for (const auto& c : clients) out.push_back(c.size());
  return out;
}

std::size_t PartitionPlan::assigned() const {
  std::size_t total = 0;
  for (const auto& c : clients) total += c.size();
  return total;
}

std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
  require(k >= 1, ErrorKind::kInvalidArgument, "dirichlet needs k >= 1");
  require(alpha > 0.0, ErrorKind::kInvalidArgument, "dirichlet alpha must be > 0");
  std::vector<double> q(k);
  while (true) {
    double sum = 0.0;
    for (auto& v : q) {
      v = rng.gamma(alpha);
      sum += v;
    }
    if (sum > 0.0) {
      for (auto& v : q) v /= sum;
      return q;
    }
  }
}

namespace {

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

void finalize(PartitionPlan& plan) {
  for (auto& c : plan.clients) std::sort(c.begin(), c.end());
}

bool has_empty_client(const std::vector<std::vector<std::size_t>>& clients) {
  return std::any_of(clients.begin(), clients.end(),
                     [](const auto& c) { return c.empty(); });
}

std::vector<double> draw_proportions(const DirichletSampler& sampler,
                                     std::size_t k, double alpha, Rng& rng) {
  auto q = sampler(k, alpha, rng);
  require(q.size() == k, ErrorKind::kInvalidArgument,
          "dirichlet sampler returned the wrong dimension");
  double sum = 0.0;
  for (double v : q) {
    require(v >= 0.0 && std::isfinite(v), ErrorKind::kInvalidArgument,
            "dirichlet sampler returned an invalid proportion");
    sum += v;
  }
  require(std::abs(sum - 1.0) < 1e-9, ErrorKind::kInvalidArgument,
          "dirichlet sampler proportions do not sum to 1");
  return q;
}

// floor(q_k * n) per client, never exceeding n in total.
std::vector<std::size_t> floor_counts(const std::vector<double>& q, std::size_t n) {
  std::vector<std::size_t> counts(q.size());
  std::size_t total = 0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    counts[k] = static_cast<std::size_t>(std::floor(q[k] * static_cast<double>(n)));
    counts[k] = std::min(counts[k], n - total);
    total += counts[k];
  }
  return counts;
}

// Hands `leftover` extra samples one at a time to the listed clients, always
// to the one currently holding the fewest samples (lowest index on ties).
void deal_leftovers(std::vector<std::size_t>& take,
                    const std::vector<std::size_t>& eligible,
                    const std::vector<std::vector<std::size_t>>& clients,
                    std::size_t leftover) {
  if (eligible.empty()) return;
  std::vector<std::size_t> order = eligible;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return clients[a].size() + take[a] < clients[b].size() + take[b];
  });
  for (std::size_t i = 0; i < leftover; ++i) ++take[order[i % order.size()]];
}

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(ds.num_classes()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels()[i])].push_back(i);
  }
  return by_class;
}

template <typename Attempt>
PartitionPlan with_redraws(std::uint64_t seed, const char* scheme_name,
                           Attempt&& attempt) {
  for (int redraw = 0; redraw <= kMaxPartitionRedraws; ++redraw) {
    std::uint64_t s = seed + static_cast<std::uint64_t>(redraw);
    std::optional<PartitionPlan> plan = attempt(s);
    if (plan) {
      plan->seed = s;
      finalize(*plan);
      return std::move(*plan);
    }
  }
  throw Error(ErrorKind::kDegeneratePartition,
              std::string(scheme_name) + ": an empty client persisted after " +
                  std::to_string(kMaxPartitionRedraws) + " redraws");
}

}  // namespace

PartitionPlan partition_iid(const LabeledDataset& ds, std::size_t num_clients,
                            std::uint64_t seed) {
  require(num_clients >= 1, ErrorKind::kInvalidArgument, "K must be >= 1");
  require(ds.size() >= num_clients, ErrorKind::kInvalidArgument,
          "iid partition needs N >= K");
  Rng rng(derive_seed(seed, "partition/iid"));
  auto idx = iota_indices(ds.size());
  rng.shuffle(std::span(idx));
  const std::size_t per_client = ds.size() / num_clients;

  PartitionPlan plan;
  plan.scheme = PartitionScheme::kIid;
  plan.seed = seed;
  plan.num_samples = ds.size();
  plan.clients.resize(num_clients);
  for (std::size_t k = 0; k < num_clients; ++k) {
    plan.clients[k].assign(idx.begin() + static_cast<std::ptrdiff_t>(k * per_client),
                           idx.begin() + static_cast<std::ptrdiff_t>((k + 1) * per_client));
  }
  finalize(plan);
  return plan;
}

PartitionPlan partition_quantity_skew(const LabeledDataset& ds,
                                      std::size_t num_clients, double alpha,
                                      std::uint64_t seed,
                                      const DirichletSampler& sampler) {
  require(num_clients >= 1, ErrorKind::kInvalidArgument, "K must be >= 1");
  require(alpha > 0.0, ErrorKind::kInvalidArgument, "alpha must be > 0");
  return with_redraws(seed, "noniid-quantity", [&](std::uint64_t s) {
    Rng rng(derive_seed(s, "partition/quantity"));
    auto q = draw_proportions(sampler, num_clients, alpha, rng);
    auto counts = floor_counts(q, ds.size());
    std::optional<PartitionPlan> out;
    if (std::find(counts.begin(), counts.end(), 0u) != counts.end()) return out;

    auto idx = iota_indices(ds.size());
    rng.shuffle(std::span(idx));
    PartitionPlan plan;
    plan.scheme = PartitionScheme::kQuantitySkew;
    plan.alpha = alpha;
    plan.num_samples = ds.size();
    plan.clients.resize(num_clients);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < num_clients; ++k) {
      plan.clients[k].assign(idx.begin() + static_cast<std::ptrdiff_t>(offset),
                             idx.begin() + static_cast<std::ptrdiff_t>(offset + counts[k]));
      offset += counts[k];
    }
    out = std::move(plan);
    return out;
  });
}

PartitionPlan partition_label_dirichlet(const LabeledDataset& ds,
                                        std::size_t num_clients, double alpha,
                                        std::uint64_t seed,
                                        const DirichletSampler& sampler) {
  require(num_clients >= 1, ErrorKind::kInvalidArgument, "K must be >= 1");
  require(alpha > 0.0, ErrorKind::kInvalidArgument, "alpha must be > 0");
  const auto by_class = indices_by_class(ds);
  auto all_clients = iota_indices(num_clients);
  return with_redraws(seed, "noniid-labeldir", [&](std::uint64_t s) {
    Rng rng(derive_seed(s, "partition/labeldir"));
    PartitionPlan plan;
    plan.scheme = PartitionScheme::kLabelDirichlet;
    plan.alpha = alpha;
    plan.num_samples = ds.size();
    plan.clients.resize(num_clients);
    for (const auto& members : by_class) {
      auto q = draw_proportions(sampler, num_clients, alpha, rng);
      auto idx = members;
      rng.shuffle(std::span(idx));
      auto take = floor_counts(q, idx.size());
      std::size_t taken = std::accumulate(take.begin(), take.end(), std::size_t{0});
      deal_leftovers(take, all_clients, plan.clients, idx.size() - taken);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < num_clients; ++k) {
        auto& dst = plan.clients[k];
        dst.insert(dst.end(), idx.begin() + static_cast<std::ptrdiff_t>(offset),
                   idx.begin() + static_cast<std::ptrdiff_t>(offset + take[k]));
        offset += take[k];
      }
    }
    std::optional<PartitionPlan> out;
    if (!has_empty_client(plan.clients)) out = std::move(plan);
    return out;
  });
}

PartitionPlan partition_label_quantity(const LabeledDataset& ds,
                                       std::size_t num_clients,
                                       int classes_per_client, std::uint64_t seed) {
  const int num_classes = ds.num_classes();
  require(num_clients >= 1, ErrorKind::kInvalidArgument, "K must be >= 1");
  require(classes_per_client >= 1 && classes_per_client <= num_classes,
          ErrorKind::kInvalidArgument, "c must lie in [1, C]");
  if (num_clients * static_cast<std::size_t>(classes_per_client) <
      static_cast<std::size_t>(num_classes)) {
    throw Error(ErrorKind::kCoverageInfeasible,
                "K*c = " + std::to_string(num_clients * classes_per_client) +
                    " cannot cover C = " + std::to_string(num_classes) + " classes");
  }
  const auto classes = static_cast<std::size_t>(num_classes);
  const auto per_client = static_cast<std::size_t>(classes_per_client);
  Rng rng(derive_seed(seed, "partition/label-quantity"));

  // Coverage first: every class goes to one client in shuffled order.
  std::vector<std::vector<bool>> holds(num_clients, std::vector<bool>(classes, false));
  std::vector<std::size_t> held_count(num_clients, 0);
  auto class_order = iota_indices(classes);
  rng.shuffle(std::span(class_order));
  for (std::size_t j = 0; j < classes; ++j) {
    std::size_t k = j % num_clients;
    holds[k][class_order[j]] = true;
    ++held_count[k];
  }
  // Then each client fills up to c classes without replacement.
  for (std::size_t k = 0; k < num_clients; ++k) {
    std::vector<std::size_t> candidates;
    for (std::size_t c = 0; c < classes; ++c) {
      if (!holds[k][c]) candidates.push_back(c);
    }
    rng.shuffle(std::span(candidates));
    for (std::size_t i = 0; held_count[k] < per_client; ++i) {
      holds[k][candidates[i]] = true;
      ++held_count[k];
    }
  }

  PartitionPlan plan;
  plan.scheme = PartitionScheme::kLabelQuantity;
  plan.classes_per_client = classes_per_client;
  plan.seed = seed;
  plan.num_samples = ds.size();
  plan.clients.resize(num_clients);
  auto by_class = indices_by_class(ds);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<std::size_t> owners;
    for (std::size_t k = 0; k < num_clients; ++k) {
      if (holds[k][c]) owners.push_back(k);
    }
    auto& idx = by_class[c];
    rng.shuffle(std::span(idx));
    std::vector<std::size_t> take(num_clients, 0);
    const std::size_t base = idx.size() / owners.size();
    for (std::size_t k : owners) take[k] = base;
    deal_leftovers(take, owners, plan.clients, idx.size() - base * owners.size());
    std::size_t offset = 0;
    for (std::size_t k : owners) {
      auto& dst = plan.clients[k];
      dst.insert(dst.end(), idx.begin() + static_cast<std::ptrdiff_t>(offset),
                 idx.begin() + static_cast<std::ptrdiff_t>(offset + take[k]));
      offset += take[k];
    }
  }
  if (has_empty_client(plan.clients)) {
    throw Error(ErrorKind::kDegeneratePartition,
                "noniid-#label: a client received no samples (classes too small)");
  }
  finalize(plan);
  return plan;
}

PartitionPlan make_partition(const LabeledDataset& ds, const PartitionParams& params) {
  switch (params.scheme) {
    case PartitionScheme::kIid:
      return partition_iid(ds, params.num_clients, params.seed);
    case PartitionScheme::kQuantitySkew:
      return partition_quantity_skew(ds, params.num_clients, params.alpha, params.seed);
    case PartitionScheme::kLabelDirichlet:
      return partition_label_dirichlet(ds, params.num_clients, params.alpha,
                                       params.seed);
    case PartitionScheme::kLabelQuantity:
      return partition_label_quantity(ds, params.num_clients,
                                      params.classes_per_client, params.seed);
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown partition scheme");
}

LabeledDataset restrict_client(const LabeledDataset& ds, const PartitionPlan& plan,
                               std::size_t k) {
  require(k < plan.num_clients(), ErrorKind::kIndexOutOfRange,
          "client " + std::to_string(k) + " >= K = " +
              std::to_string(plan.num_clients()));
  return ds.subset(plan.clients[k]);
}

void validate_plan(const PartitionPlan& plan, std::size_t num_samples) {
  std::vector<bool> seen(num_samples, false);
  for (std::size_t k = 0; k < plan.clients.size(); ++k) {
    require(!plan.clients[k].empty(), ErrorKind::kDegeneratePartition,
            "client " + std::to_string(k) + " is empty");
    for (std::size_t idx : plan.clients[k]) {
      require(idx < num_samples, ErrorKind::kIndexOutOfRange,
              "client " + std::to_string(k) + " holds index " +
                  std::to_string(idx) + " >= N = " + std::to_string(num_samples));
      require(!seen[idx], ErrorKind::kInvalidArgument,
              "index " + std::to_string(idx) + " assigned twice");
      seen[idx] = true;
    }
  }
}

nlohmann::json plan_to_json(const PartitionPlan& plan) {
  nlohmann::json params = nlohmann::json::object();
  if (plan.scheme == PartitionScheme::kQuantitySkew ||
      plan.scheme == PartitionScheme::kLabelDirichlet) {
    params["alpha"] = plan.alpha;
  } else if (plan.scheme == PartitionScheme::kLabelQuantity) {
    params["c"] = plan.classes_per_client;
  }
  nlohmann::json doc;
  doc["scheme"] = std::string(to_string(plan.scheme));
  doc["params"] = params;
  doc["seed"] = plan.seed;
  doc["num_samples"] = plan.num_samples;
  doc["clients"] = plan.clients;
  return doc;
}

PartitionPlan plan_from_json(const nlohmann::json& doc) {
  try {
    PartitionPlan plan;
    plan.scheme = parse_partition_scheme(doc.at("scheme").get<std::string>());
    const auto& params = doc.at("params");
    if (params.contains("alpha")) plan.alpha = params.at("alpha").get<double>();
    if (params.contains("c")) plan.classes_per_client = params.at("c").get<int>();
    plan.seed = doc.at("seed").get<std::uint64_t>();
    plan.num_samples = doc.at("num_samples").get<std::size_t>();
    plan.clients = doc.at("clients").get<std::vector<std::vector<std::size_t>>>();
    validate_plan(plan, plan.num_samples);
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("plan file: ") + e.what());
  }
}

void save_plan(const PartitionPlan& plan, const std::filesystem::path& path) {
  write_text_file(path, plan_to_json(plan).dump() + "\n");
}

PartitionPlan load_plan(const std::filesystem::path& path) {
  auto text = read_text_file(path);
  try {
    return plan_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParse, path.string() + ": " + e.what());
  }
}

}  // namespace fednoisy
