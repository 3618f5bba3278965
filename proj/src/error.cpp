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

#include "fednoisy/error.hpp"

namespace fednoisy {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kIo: return "io-error";
    case ErrorKind::kParse: return "parse-error";
    case ErrorKind::kLabelRange: return "label-range-error";
    case ErrorKind::kIndexOutOfRange: return "index-out-of-range";
    case ErrorKind::kDegeneratePartition: return "degenerate-partition";
    case ErrorKind::kCoverageInfeasible: return "coverage-infeasible";
    case ErrorKind::kLabelNotInMatrix: return "label-not-in-matrix";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kLayoutMismatch: return "layout-mismatch";
    case ErrorKind::kEmptyInput: return "empty-input";
    case ErrorKind::kEmptyDataset: return "empty-dataset";
    case ErrorKind::kNonFiniteParameters: return "non-finite-parameters";
    case ErrorKind::kInsufficientRecords: return "insufficient-records";
    case ErrorKind::kDivisionByZero: return "division-by-zero";
    case ErrorKind::kLengthMismatch: return "length-mismatch";
    case ErrorKind::kConfig: return "config-error";
    case ErrorKind::kArtifactMismatch: return "artifact-mismatch";
  }
  return "unknown-error";
}

}  // namespace fednoisy
