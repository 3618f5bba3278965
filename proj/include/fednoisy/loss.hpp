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

#include <span>
#include <string_view>
#include <vector>

#include "fednoisy/dataset.hpp"
#include "fednoisy/matrix.hpp"
#include "fednoisy/model.hpp"

namespace fednoisy {

enum class LossKind { kCe, kSce, kGce, kMae };

std::string_view to_string(LossKind kind);

// Defaults follow the original method publications (SCE: alpha 0.1, beta 1.0,
// log(0) clipped to -4; GCE: q 0.7).
struct LossParams {
  double sce_alpha = 0.1;
  double sce_beta = 1.0;
  double sce_log_clip = -4.0;
  double gce_q = 0.7;

  void validate(LossKind kind) const;
};

struct LossOutput {
  double value = 0.0;               // mean of per_sample
  std::vector<double> per_sample;   // all >= 0
  std::vector<double> grad;         // d(value)/d(params) + weight_decay * w
};

// Per-sample losses on probability rows; `grad` is left empty.
//   CE  = -log p_y
//   SCE = alpha * CE + beta * RCE,  RCE = -A * (1 - p_y)  (A = log-clip)
//   GCE = (1 - p_y^q) / q
//   MAE = 2 * (1 - p_y)
LossOutput loss_ce(const Matrix& probs, std::span<const ClassId> labels);
LossOutput loss_sce(const Matrix& probs, std::span<const ClassId> labels,
                    double alpha, double beta, double log_clip = -4.0);
LossOutput loss_gce(const Matrix& probs, std::span<const ClassId> labels, double q);
LossOutput loss_mae(const Matrix& probs, std::span<const ClassId> labels);
// Cross-entropy against soft target rows (mixup).
LossOutput loss_soft_ce(const Matrix& probs, const Matrix& targets);

LossOutput evaluate_loss(LossKind kind, const Matrix& probs,
                         std::span<const ClassId> labels, const LossParams& params);

// Exact gradient of the mean loss through softmax and the model, plus
// weight_decay * w. `value` and `per_sample` exclude the decay term.
LossOutput backward(const ModelParams& params, const Matrix& inputs,
                    std::span<const ClassId> labels, LossKind kind,
                    const LossParams& loss_params, double weight_decay);

LossOutput backward_soft(const ModelParams& params, const Matrix& inputs,
                         const Matrix& targets, double weight_decay);

}  // namespace fednoisy
