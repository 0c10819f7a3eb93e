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

#include "tpbsim/error.hpp"

namespace tpbsim {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::InvalidLevel: return "InvalidLevel";
    case ErrorKind::OverflowFault: return "OverflowFault";
    case ErrorKind::MalformedRequest: return "MalformedRequest";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorKind::TileTooLarge: return "TileTooLarge";
    case ErrorKind::InvalidPipeline: return "InvalidPipeline";
    case ErrorKind::NonfiniteFault: return "NonfiniteFault";
    case ErrorKind::OverlapFault: return "OverlapFault";
    case ErrorKind::UnroutableTarget: return "UnroutableTarget";
    case ErrorKind::UnknownRoutine: return "UnknownRoutine";
    case ErrorKind::BadDescriptor: return "BadDescriptor";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::UnsupportedOp: return "UnsupportedOp";
    case ErrorKind::DoesNotFit: return "DoesNotFit";
    case ErrorKind::TooFewTpbs: return "TooFewTpbs";
    case ErrorKind::OutOfCounters: return "OutOfCounters";
    case ErrorKind::DeadlockDetected: return "DeadlockDetected";
    case ErrorKind::RaceDetected: return "RaceDetected";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::Internal: return "Internal";
  }
  return "Unknown";
}

namespace {

std::string compose(ErrorKind kind, const std::string& message,
                    const std::vector<std::string>& details) {
  std::string out(to_string(kind));
  out += ": ";
  out += message;
  for (const auto& d : details) {
    out += "\n  - ";
    out += d;
  }
  return out;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& message,
             std::vector<std::string> details)
    : std::runtime_error(compose(kind, message, details)),
      kind_(kind),
      details_(std::move(details)) {}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace tpbsim
