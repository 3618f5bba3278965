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
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fednoisy/dataset.hpp"
#include "fednoisy/loss.hpp"
#include "fednoisy/model.hpp"
#include "fednoisy/rng.hpp"

namespace fednoisy {

enum class TrainMethod { kCe, kMixup, kSce, kGce, kMae, kCoteaching };

std::string_view to_string(TrainMethod method);
TrainMethod parse_train_method(std::string_view name);

// Local-training hyperparameters. Optimizer defaults are the benchmark's
// (momentum 0.9, weight decay 5e-4, batch 128); method defaults come from
// the original method publications.
struct TrainerConfig {
  TrainMethod method = TrainMethod::kCe;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 128;
  int epochs = 5;

  double mixup_alpha = 1.0;
  LossParams loss;
  // Co-teaching: final discarded fraction and the rounds taken to reach it.
  // When unset the federation runtime uses the configured noise rate.
  std::optional<double> forget_rate;
  int ramp_rounds = 10;

  void validate() const;
};

// Method-specific keys accepted in the "params" object of a trainer config.
nlohmann::json trainer_to_json(const TrainerConfig& config);
TrainerConfig trainer_from_json(const nlohmann::json& doc);

struct TrainStats {
  std::vector<double> epoch_loss;  // mean per-sample loss of each epoch
  double final_loss() const { return epoch_loss.empty() ? 0.0 : epoch_loss.back(); }
};

struct LocalResult {
  ModelParams params;
  TrainStats stats;
};

// Draws the mixup coefficient for one batch.
using MixupLambdaSampler = std::function<double(Rng& rng, double alpha)>;
double sample_mixup_lambda(Rng& rng, double alpha);

// Plain cross-entropy SGD for `config.epochs` epochs. Batches come from a
// per-epoch shuffle derived from `seed`; the momentum buffer starts at zero.
LocalResult train_local_ce(const LabeledDataset& ds, ModelParams params,
                           const TrainerConfig& config, std::uint64_t seed);

// SCE, GCE or MAE (config.method picks the loss).
LocalResult train_local_robustloss(const LabeledDataset& ds, ModelParams params,
                                   const TrainerConfig& config, std::uint64_t seed);

// Per batch: lambda ~ Beta(a, a), pair each sample with a shuffled partner,
// mix features and one-hot targets, train with soft-target cross-entropy.
LocalResult train_local_mixup(const LabeledDataset& ds, ModelParams params,
                              const TrainerConfig& config, std::uint64_t seed,
                              const MixupLambdaSampler& sampler = sample_mixup_lambda);

// Dispatch for every method except co-teaching.
LocalResult train_local(const LabeledDataset& ds, ModelParams params,
                        const TrainerConfig& config, std::uint64_t seed);

// Fraction of each batch kept at round t: 1 - tau * min(t / ramp, 1).
double coteaching_keep_ratio(double forget_rate, int round_t, int ramp_rounds);

// Positions of the max(1, floor(keep_ratio * n)) smallest losses, ascending.
std::vector<std::size_t> select_small_loss(std::span<const double> losses,
                                           double keep_ratio);

struct CoteachingResult {
  ModelParams first;
  ModelParams second;
  TrainStats stats;  // losses of the first network on full batches
};

// Both networks see the same batches; each one updates on the small-loss
// subset chosen by the other.
CoteachingResult train_local_coteaching(const LabeledDataset& ds, ModelParams first,
                                        ModelParams second, const TrainerConfig& config,
                                        int round_t, std::uint64_t seed);

}  // namespace fednoisy
