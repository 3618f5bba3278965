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

#include <vector>

#include "fednoisy/matrix.hpp"
#include "fednoisy/model.hpp"

namespace fednoisy::detail {

struct ForwardPass {
  Matrix hidden_pre;  // MLP only
  Matrix hidden;      // MLP only
  Matrix logits;
};

ForwardPass run_forward(const ModelParams& params, const Matrix& inputs);

// grad += d(loss)/d(params) given d(loss)/d(logits).
void backpropagate(const ModelParams& params, const Matrix& inputs,
                   const ForwardPass& pass, const Matrix& dlogits,
                   std::vector<double>& grad);

}  // namespace fednoisy::detail
