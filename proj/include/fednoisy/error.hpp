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

#include <stdexcept>
#include <string>
#include <string_view>

namespace fednoisy {

enum class ErrorKind {
  kInvalidArgument,
  kIo,
  kParse,
  kLabelRange,
  kIndexOutOfRange,
  kDegeneratePartition,
  kCoverageInfeasible,
  kLabelNotInMatrix,
  kShapeMismatch,
  kLayoutMismatch,
  kEmptyInput,
  kEmptyDataset,
  kNonFiniteParameters,
  kInsufficientRecords,
  kDivisionByZero,
  kLengthMismatch,
  kConfig,
  kArtifactMismatch,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this type; `kind()` is stable
// and is what callers (and the CLI exit-code mapping) branch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  // The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace fednoisy
