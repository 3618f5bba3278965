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

#include "fednoisy/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "fednoisy/error.hpp"
#include "fednoisy/optimizer.hpp"

namespace fednoisy {

std::string_view to_string(TrainMethod method) {
  switch (method) {
    case TrainMethod::kCe: return "ce";
    case TrainMethod::kMixup: return "mixup";
    case TrainMethod::kSce: return "sce";
    case TrainMethod::kGce: return "gce";
    case TrainMethod::kMae: return "mae";
    case TrainMethod::kCoteaching: return "coteaching";
  }
  return "ce";
}

TrainMethod parse_train_method(std::string_view name) {
  if (name == "ce") return TrainMethod::kCe;
  if (name == "mixup") return TrainMethod::kMixup;
  if (name == "sce") return TrainMethod::kSce;
  if (name == "gce") return TrainMethod::kGce;
  if (name == "mae") return TrainMethod::kMae;
  if (name == "coteaching" || name == "co-teaching") return TrainMethod::kCoteaching;
  throw Error(ErrorKind::kInvalidArgument, "unknown training method '" + std::string(name) + "'");
}

void TrainerConfig::validate() const {
  require(lr > 0.0, ErrorKind::kInvalidArgument, "lr must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::kInvalidArgument,
          "momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, ErrorKind::kInvalidArgument, "weight_decay must be >= 0");
  require(batch_size >= 1, ErrorKind::kInvalidArgument, "batch_size must be >= 1");
  require(epochs >= 1, ErrorKind::kInvalidArgument, "epochs must be >= 1");
  switch (method) {
    case TrainMethod::kMixup:
      require(mixup_alpha > 0.0, ErrorKind::kInvalidArgument, "mixup alpha must be > 0");
      break;
    case TrainMethod::kSce: loss.validate(LossKind::kSce); break;
    case TrainMethod::kGce: loss.validate(LossKind::kGce); break;
    case TrainMethod::kCoteaching:
      if (forget_rate) {
        require(*forget_rate >= 0.0 && *forget_rate <= 1.0, ErrorKind::kInvalidArgument,
                "co-teaching forget rate must lie in [0, 1]");
      }
      require(ramp_rounds >= 1, ErrorKind::kInvalidArgument,
              "co-teaching ramp_rounds must be >= 1");
      break;
    default: break;
  }
}

nlohmann::json trainer_to_json(const TrainerConfig& config) {
  nlohmann::json doc;
  doc["method"] = std::string(to_string(config.method));
  doc["lr"] = config.lr;
  doc["momentum"] = config.momentum;
  doc["weight_decay"] = config.weight_decay;
  doc["batch_size"] = config.batch_size;
  doc["epochs"] = config.epochs;
  nlohmann::json params = nlohmann::json::object();
  switch (config.method) {
    case TrainMethod::kMixup: params["alpha"] = config.mixup_alpha; break;
    case TrainMethod::kSce:
      params["alpha"] = config.loss.sce_alpha;
      params["beta"] = config.loss.sce_beta;
      params["log_clip"] = config.loss.sce_log_clip;
      break;
    case TrainMethod::kGce: params["q"] = config.loss.gce_q; break;
    case TrainMethod::kCoteaching:
      params["forget_rate"] =
          config.forget_rate ? nlohmann::json(*config.forget_rate) : nlohmann::json();
      params["ramp_rounds"] = config.ramp_rounds;
      break;
    default: break;
  }
  doc["params"] = params;
  return doc;
}

TrainerConfig trainer_from_json(const nlohmann::json& doc) {
  TrainerConfig config;
  try {
    config.method = parse_train_method(doc.value("method", std::string("ce")));
    config.lr = doc.value("lr", config.lr);
    config.momentum = doc.value("momentum", config.momentum);
    config.weight_decay = doc.value("weight_decay", config.weight_decay);
    config.batch_size = doc.value("batch_size", config.batch_size);
    config.epochs = doc.value("epochs", config.epochs);
    nlohmann::json params = doc.value("params", nlohmann::json::object());
    std::set<std::string> allowed;
    switch (config.method) {
      case TrainMethod::kMixup: allowed = {"alpha"}; break;
      case TrainMethod::kSce: allowed = {"alpha", "beta", "log_clip"}; break;
      case TrainMethod::kGce: allowed = {"q"}; break;
      case TrainMethod::kCoteaching: allowed = {"forget_rate", "ramp_rounds"}; break;
      default: break;
    }
    for (const auto& [key, _] : params.items()) {
      if (!allowed.contains(key)) {
        throw Error(ErrorKind::kConfig,
                    "trainer.params." + key + " is not valid for method " +
                        std::string(to_string(config.method)));
      }
    }
    if (config.method == TrainMethod::kMixup) {
      config.mixup_alpha = params.value("alpha", config.mixup_alpha);
    } else if (config.method == TrainMethod::kSce) {
      config.loss.sce_alpha = params.value("alpha", config.loss.sce_alpha);
      config.loss.sce_beta = params.value("beta", config.loss.sce_beta);
      config.loss.sce_log_clip = params.value("log_clip", config.loss.sce_log_clip);
    } else if (config.method == TrainMethod::kGce) {
      config.loss.gce_q = params.value("q", config.loss.gce_q);
    } else if (config.method == TrainMethod::kCoteaching) {
      if (params.contains("forget_rate") && !params.at("forget_rate").is_null()) {
        config.forget_rate = params.at("forget_rate").get<double>();
      }
      config.ramp_rounds = params.value("ramp_rounds", config.ramp_rounds);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("trainer: ") + e.what());
  }
  config.validate();
  return config;
}

double sample_mixup_lambda(Rng& rng, double alpha) { return rng.beta(alpha, alpha); }

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
  rng.shuffle(std::span(order));
  return order;
}

struct Batch {
  Matrix inputs;
  std::vector<ClassId> labels;
};

Batch gather(const LabeledDataset& ds, std::span<const std::size_t> rows) {
  Batch batch{ds.features().select_rows(rows), {}};
  batch.labels.reserve(rows.size());
  for (std::size_t r : rows) batch.labels.push_back(ds.labels()[r]);
  return batch;
}

// Runs the epoch/batch loop; `step` trains on one batch and returns the batch
// loss summed over its samples.
template <typename Step>
TrainStats run_epochs(const LabeledDataset& ds, const TrainerConfig& config,
                      std::uint64_t seed, Step&& step) {
  require(ds.size() > 0, ErrorKind::kEmptyDataset, "local dataset is empty");
  config.validate();
  TrainStats stats;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto order = epoch_order(ds.size(), seed, epoch);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::size_t end = std::min(order.size(), start + config.batch_size);
      Batch batch = gather(ds, std::span(order).subspan(start, end - start));
      loss_sum += step(batch, epoch, batch_index++);
    }
    stats.epoch_loss.push_back(loss_sum / static_cast<double>(ds.size()));
  }
  return stats;
}

LossKind loss_for(TrainMethod method) {
  switch (method) {
    case TrainMethod::kSce: return LossKind::kSce;
    case TrainMethod::kGce: return LossKind::kGce;
    case TrainMethod::kMae: return LossKind::kMae;
    default: return LossKind::kCe;
  }
}

LocalResult train_hard_labels(const LabeledDataset& ds, ModelParams params,
                              const TrainerConfig& config, std::uint64_t seed,
                              LossKind kind) {
  SgdState state;
  auto stats = run_epochs(ds, config, seed, [&](const Batch& batch, int, std::size_t) {
    LossOutput out = backward(params, batch.inputs, batch.labels, kind, config.loss,
                              config.weight_decay);
    sgd_step(params, out.grad, state, config.lr, config.momentum);
    return out.value * static_cast<double>(batch.labels.size());
  });
  return {std::move(params), std::move(stats)};
}

}  // namespace

LocalResult train_local_ce(const LabeledDataset& ds, ModelParams params,
                           const TrainerConfig& config, std::uint64_t seed) {
  return train_hard_labels(ds, std::move(params), config, seed, LossKind::kCe);
}

LocalResult train_local_robustloss(const LabeledDataset& ds, ModelParams params,
                                   const TrainerConfig& config, std::uint64_t seed) {
  require(config.method == TrainMethod::kSce || config.method == TrainMethod::kGce ||
              config.method == TrainMethod::kMae,
          ErrorKind::kInvalidArgument, "robust-loss training needs method sce, gce or mae");
  return train_hard_labels(ds, std::move(params), config, seed, loss_for(config.method));
}

LocalResult train_local_mixup(const LabeledDataset& ds, ModelParams params,
                              const TrainerConfig& config, std::uint64_t seed,
                              const MixupLambdaSampler& sampler) {
  SgdState state;
  const std::size_t classes = params.layout.num_classes;
  auto stats = run_epochs(ds, config, seed, [&](const Batch& batch, int epoch,
                                                std::size_t batch_index) {
    Rng rng(derive_seed(seed, "mixup", static_cast<std::uint64_t>(epoch), batch_index));
    const double lambda = sampler(rng, config.mixup_alpha);
    require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kInvalidArgument,
            "mixup lambda outside [0, 1]");
    const std::size_t n = batch.labels.size();
    std::vector<std::size_t> partner(n);
    std::iota(partner.begin(), partner.end(), std::size_t{0});
    rng.shuffle(std::span(partner));

    Matrix mixed(n, batch.inputs.cols());
    Matrix targets(n, classes, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto a = batch.inputs.row(i);
      auto b = batch.inputs.row(partner[i]);
      auto out = mixed.row(i);
      for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = lambda * a[j] + (1.0 - lambda) * b[j];
      }
      targets(i, static_cast<std::size_t>(batch.labels[i])) += lambda;
      targets(i, static_cast<std::size_t>(batch.labels[partner[i]])) += 1.0 - lambda;
    }
    LossOutput out = backward_soft(params, mixed, targets, config.weight_decay);
    sgd_step(params, out.grad, state, config.lr, config.momentum);
    return out.value * static_cast<double>(n);
  });
  return {std::move(params), std::move(stats)};
}

LocalResult train_local(const LabeledDataset& ds, ModelParams params,
                        const TrainerConfig& config, std::uint64_t seed) {
  switch (config.method) {
    case TrainMethod::kCe: return train_local_ce(ds, std::move(params), config, seed);
    case TrainMethod::kMixup:
      return train_local_mixup(ds, std::move(params), config, seed);
    case TrainMethod::kSce:
    case TrainMethod::kGce:
    case TrainMethod::kMae:
      return train_local_robustloss(ds, std::move(params), config, seed);
    case TrainMethod::kCoteaching: break;
  }
  throw Error(ErrorKind::kInvalidArgument,
              "co-teaching needs two networks; use train_local_coteaching");
}

double coteaching_keep_ratio(double forget_rate, int round_t, int ramp_rounds) {
  require(ramp_rounds >= 1, ErrorKind::kInvalidArgument, "ramp_rounds must be >= 1");
  double progress = std::min(static_cast<double>(std::max(round_t, 0)) /
                                 static_cast<double>(ramp_rounds),
                             1.0);
  return 1.0 - forget_rate * progress;
}

std::vector<std::size_t> select_small_loss(std::span<const double> losses,
                                           double keep_ratio) {
  const std::size_t n = losses.size();
  if (n == 0) return {};
  auto keep = static_cast<std::size_t>(std::floor(keep_ratio * static_cast<double>(n)));
  keep = std::clamp<std::size_t>(keep, 1, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

CoteachingResult train_local_coteaching(const LabeledDataset& ds, ModelParams first,
                                        ModelParams second, const TrainerConfig& config,
                                        int round_t, std::uint64_t seed) {
  require(first.layout == second.layout, ErrorKind::kLayoutMismatch,
          "co-teaching networks must share a layout");
  const double forget = config.forget_rate.value_or(0.0);
  const double keep = coteaching_keep_ratio(forget, round_t, config.ramp_rounds);
  SgdState state_first;
  SgdState state_second;
  auto stats = run_epochs(ds, config, seed, [&](const Batch& batch, int, std::size_t) {
    Matrix probs_first = forward(first, batch.inputs);
    Matrix probs_second = forward(second, batch.inputs);
    LossOutput loss_first = loss_ce(probs_first, batch.labels);
    LossOutput loss_second = loss_ce(probs_second, batch.labels);
    auto chosen_by_first = select_small_loss(loss_first.per_sample, keep);
    auto chosen_by_second = select_small_loss(loss_second.per_sample, keep);

    auto update = [&](ModelParams& net, SgdState& state,
                      const std::vector<std::size_t>& rows) {
      Matrix inputs = batch.inputs.select_rows(rows);
      std::vector<ClassId> labels;
      labels.reserve(rows.size());
      for (std::size_t r : rows) labels.push_back(batch.labels[r]);
      LossOutput out = backward(net, inputs, labels, LossKind::kCe, config.loss,
                                config.weight_decay);
      sgd_step(net, out.grad, state, config.lr, config.momentum);
    };
    update(first, state_first, chosen_by_second);
    update(second, state_second, chosen_by_first);
    return loss_first.value * static_cast<double>(batch.labels.size());
  });
  return {std::move(first), std::move(second), std::move(stats)};
}

}  // namespace fednoisy
