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
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fednoisy/matrix.hpp"

namespace fednoisy {

enum class ModelKind { kLinearSoftmax, kMlp };
enum class Activation { kTanh, kRelu };

std::string_view to_string(ModelKind kind);
std::string_view to_string(Activation activation);

// Flat parameter order:
//   linear-softmax: W (C x d, row-major), b (C)
//   mlp:            W1 (H x d), b1 (H), W2 (C x H), b2 (C)
struct ModelLayout {
  ModelKind kind = ModelKind::kLinearSoftmax;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::size_t num_classes = 0;
  Activation activation = Activation::kTanh;

  static ModelLayout linear(std::size_t input_dim, std::size_t num_classes);
  static ModelLayout mlp(std::size_t input_dim, std::size_t hidden,
                         std::size_t num_classes,
                         Activation activation = Activation::kTanh);

  std::size_t parameter_count() const;
  void validate() const;

  bool operator==(const ModelLayout&) const = default;
};

struct ModelParams {
  ModelLayout layout;
  std::vector<double> values;

  // Throws layout-mismatch on a size mismatch, non-finite-parameters on
  // NaN/inf entries.
  void validate() const;
  bool all_finite() const;

  bool operator==(const ModelParams&) const = default;
};

ModelParams zero_params(const ModelLayout& layout);

// Each layer uniform in +-1/sqrt(fan_in), weights and biases alike.
ModelParams init_params(const ModelLayout& layout, std::uint64_t seed);

// Pre-softmax scores, one row per input row.
Matrix forward_logits(const ModelParams& params, const Matrix& inputs);

// Softmax probabilities, one simplex row per input row.
Matrix forward(const ModelParams& params, const Matrix& inputs);

// Row-wise numerically stable softmax.
Matrix softmax_rows(const Matrix& logits);

nlohmann::json layout_to_json(const ModelLayout& layout);
ModelLayout layout_from_json(const nlohmann::json& doc);

struct Checkpoint {
  ModelParams params;
  std::int64_t round = 0;
  std::uint64_t seed = 0;
};

// One line of JSON header ({layout, round, seed, count}) followed by the
// parameters as little-endian IEEE-754 doubles.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fednoisy
