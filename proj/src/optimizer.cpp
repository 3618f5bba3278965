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

#include "fednoisy/optimizer.hpp"

#include "fednoisy/error.hpp"

namespace fednoisy {

void sgd_step(ModelParams& params, std::span<const double> grad, SgdState& state,
              double lr, double momentum) {
  const std::size_t n = params.values.size();
  require(grad.size() == n, ErrorKind::kShapeMismatch,
          "gradient length does not match parameters");
  if (state.velocity.empty()) state.velocity.assign(n, 0.0);
  require(state.velocity.size() == n, ErrorKind::kShapeMismatch,
          "optimizer state length does not match parameters");
  for (std::size_t i = 0; i < n; ++i) {
    state.velocity[i] = momentum * state.velocity[i] + grad[i];
    params.values[i] -= lr * state.velocity[i];
  }
}

}  // namespace fednoisy
