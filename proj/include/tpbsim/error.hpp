// Copyright 2026 The tpbsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tpbsim {

enum class ErrorKind {
  ConfigInvalid,
  IndexOutOfRange,
  InvalidLevel,
  OverflowFault,
  MalformedRequest,
  OutOfRange,
  UnsupportedDtype,
  TileTooLarge,
  InvalidPipeline,
  NonfiniteFault,
  OverlapFault,
  UnroutableTarget,
  UnknownRoutine,
  BadDescriptor,
  ParseError,
  ShapeMismatch,
  UnsupportedOp,
  DoesNotFit,
  TooFewTpbs,
  OutOfCounters,
  DeadlockDetected,
  RaceDetected,
  IoError,
  Internal,
};

std::string_view to_string(ErrorKind kind);

// All recoverable failures in the library are reported through this type.
// `details` carries one line per individual violation where several can be
// reported at once (config validation, deadlock wait-for chains).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::vector<std::string> details = {});

  ErrorKind kind() const noexcept { return kind_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorKind kind_;
  std::vector<std::string> details_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace tpbsim
