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

#include "fednoisy/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fednoisy/error.hpp"
#include "model_internal.hpp"

namespace fednoisy {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCe: return "ce";
    case LossKind::kSce: return "sce";
    case LossKind::kGce: return "gce";
    case LossKind::kMae: return "mae";
  }
  return "ce";
}

void LossParams::validate(LossKind kind) const {
  if (kind == LossKind::kGce) {
    require(gce_q > 0.0 && gce_q <= 1.0, ErrorKind::kInvalidArgument,
            "GCE q must lie in (0, 1]");
  }
  if (kind == LossKind::kSce) {
    require(sce_alpha > 0.0 && sce_beta > 0.0, ErrorKind::kInvalidArgument,
            "SCE alpha and beta must be > 0");
    require(sce_log_clip < 0.0, ErrorKind::kInvalidArgument,
            "SCE log clip must be negative");
  }
}

namespace {

void check_labels(const Matrix& probs, std::span<const ClassId> labels) {
  require(probs.rows() == labels.size(), ErrorKind::kShapeMismatch,
          "probability rows and label count differ");
  for (ClassId y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < probs.cols(),
            ErrorKind::kInvalidArgument, "label " + std::to_string(y) + " out of range");
  }
}

template <typename PerSample>
LossOutput reduce(std::size_t n, PerSample&& per_sample_loss) {
  LossOutput out;
  out.per_sample.resize(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.per_sample[i] = per_sample_loss(i);
    sum += out.per_sample[i];
  }
  out.value = n == 0 ? 0.0 : sum / static_cast<double>(n);
  return out;
}

double log_sum_exp(std::span<const double> z) {
  double max = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - max);
  return max + std::log(sum);
}

}  // namespace

LossOutput loss_ce(const Matrix& probs, std::span<const ClassId> labels) {
  check_labels(probs, labels);
  return reduce(labels.size(), [&](std::size_t i) {
    return -std::log(probs(i, static_cast<std::size_t>(labels[i])));
  });
}

LossOutput loss_sce(const Matrix& probs, std::span<const ClassId> labels,
                    double alpha, double beta, double log_clip) {
  LossParams params;
  params.sce_alpha = alpha;
  params.sce_beta = beta;
  params.sce_log_clip = log_clip;
  params.validate(LossKind::kSce);
  check_labels(probs, labels);
  return reduce(labels.size(), [&](std::size_t i) {
    double p = probs(i, static_cast<std::size_t>(labels[i]));
    return alpha * -std::log(p) + beta * -log_clip * (1.0 - p);
  });
}

LossOutput loss_gce(const Matrix& probs, std::span<const ClassId> labels, double q) {
  LossParams params;
  params.gce_q = q;
  params.validate(LossKind::kGce);
  check_labels(probs, labels);
  return reduce(labels.size(), [&](std::size_t i) {
    double p = probs(i, static_cast<std::size_t>(labels[i]));
    return (1.0 - std::pow(p, q)) / q;
  });
}

LossOutput loss_mae(const Matrix& probs, std::span<const ClassId> labels) {
  check_labels(probs, labels);
  return reduce(labels.size(), [&](std::size_t i) {
    return 2.0 * (1.0 - probs(i, static_cast<std::size_t>(labels[i])));
  });
}

LossOutput loss_soft_ce(const Matrix& probs, const Matrix& targets) {
  require(probs.rows() == targets.rows() && probs.cols() == targets.cols(),
          ErrorKind::kShapeMismatch, "probabilities and soft targets differ in shape");
  return reduce(probs.rows(), [&](std::size_t i) {
    double loss = 0.0;
    for (std::size_t k = 0; k < probs.cols(); ++k) {
      if (targets(i, k) != 0.0) loss -= targets(i, k) * std::log(probs(i, k));
    }
    return loss;
  });
}

LossOutput evaluate_loss(LossKind kind, const Matrix& probs,
                         std::span<const ClassId> labels, const LossParams& params) {
  switch (kind) {
    case LossKind::kCe: return loss_ce(probs, labels);
    case LossKind::kSce:
      return loss_sce(probs, labels, params.sce_alpha, params.sce_beta,
                      params.sce_log_clip);
    case LossKind::kGce: return loss_gce(probs, labels, params.gce_q);
    case LossKind::kMae: return loss_mae(probs, labels);
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown loss kind");
}

namespace {

LossOutput finish_backward(const ModelParams& params, const Matrix& inputs,
                           const detail::ForwardPass& pass, const Matrix& dlogits,
                           LossOutput out, double weight_decay) {
  out.grad.assign(params.values.size(), 0.0);
  detail::backpropagate(params, inputs, pass, dlogits, out.grad);
  if (weight_decay != 0.0) {
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      out.grad[i] += weight_decay * params.values[i];
    }
  }
  return out;
}

}  // namespace

LossOutput backward(const ModelParams& params, const Matrix& inputs,
                    std::span<const ClassId> labels, LossKind kind,
                    const LossParams& loss_params, double weight_decay) {
  loss_params.validate(kind);
  require(inputs.rows() == labels.size(), ErrorKind::kShapeMismatch,
          "input rows and label count differ");
  auto pass = detail::run_forward(params, inputs);
  const std::size_t n = inputs.rows();
  const std::size_t c = params.layout.num_classes;
  for (ClassId y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < c, ErrorKind::kShapeMismatch,
            "label " + std::to_string(y) + " outside model classes");
  }
  Matrix probs = softmax_rows(pass.logits);
  Matrix dlogits(n, c);
  const double scale = 1.0 / static_cast<double>(n);

  LossOutput out = reduce(n, [&](std::size_t i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    auto p = probs.row(i);
    auto dz = dlogits.row(i);
    const double py = p[y];
    double ce = log_sum_exp(pass.logits.row(i)) - pass.logits(i, y);
    // Losses of the form f(p_y) have dz_k = f'(p_y) * p_y * (delta_ky - p_k).
    double coeff = 0.0;  // f'(p_y) * p_y
    double ce_weight = 0.0;
    double loss = 0.0;
    switch (kind) {
      case LossKind::kCe:
        ce_weight = 1.0;
        loss = ce;
        break;
      case LossKind::kSce:
        ce_weight = loss_params.sce_alpha;
        coeff = loss_params.sce_beta * loss_params.sce_log_clip * py;
        loss = loss_params.sce_alpha * ce +
               loss_params.sce_beta * -loss_params.sce_log_clip * (1.0 - py);
        break;
      case LossKind::kGce: {
        double pq = std::pow(py, loss_params.gce_q);
        coeff = -pq;
        loss = (1.0 - pq) / loss_params.gce_q;
        break;
      }
      case LossKind::kMae:
        coeff = -2.0 * py;
        loss = 2.0 * (1.0 - py);
        break;
    }
    for (std::size_t k = 0; k < c; ++k) {
      const double delta = k == y ? 1.0 : 0.0;
      double g = 0.0;
      if (ce_weight != 0.0) g += ce_weight * (p[k] - delta);
      if (coeff != 0.0) g += coeff * (delta - p[k]);
      dz[k] = g * scale;
    }
    return loss;
  });
  return finish_backward(params, inputs, pass, dlogits, std::move(out), weight_decay);
}

LossOutput backward_soft(const ModelParams& params, const Matrix& inputs,
                         const Matrix& targets, double weight_decay) {
  const std::size_t n = inputs.rows();
  const std::size_t c = params.layout.num_classes;
  require(targets.rows() == n && targets.cols() == c, ErrorKind::kShapeMismatch,
          "soft targets do not match batch shape");
  auto pass = detail::run_forward(params, inputs);
  Matrix probs = softmax_rows(pass.logits);
  Matrix dlogits(n, c);
  const double scale = 1.0 / static_cast<double>(n);
  LossOutput out = reduce(n, [&](std::size_t i) {
    auto z = pass.logits.row(i);
    auto t = targets.row(i);
    auto p = probs.row(i);
    const double lse = log_sum_exp(z);
    double mass = 0.0;
    double loss = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      if (t[k] != 0.0) loss += t[k] * (lse - z[k]);
      mass += t[k];
    }
    for (std::size_t k = 0; k < c; ++k) {
      dlogits(i, k) = (mass * p[k] - t[k]) * scale;
    }
    return loss;
  });
  return finish_backward(params, inputs, pass, dlogits, std::move(out), weight_decay);
}

}  // namespace fednoisy
