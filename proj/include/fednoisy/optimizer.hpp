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
#include <vector>

#include "fednoisy/model.hpp"

namespace fednoisy {

// Momentum buffer; empty means zero.
struct SgdState {
  std::vector<double> velocity;
};

// v' = momentum * v + grad;  w' = w - lr * v'.
// Weight decay is expected to be folded into `grad` already (see backward()).
void sgd_step(ModelParams& params, std::span<const double> grad, SgdState& state,
              double lr, double momentum);

}  // namespace fednoisy
