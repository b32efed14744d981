/* Copyright 2026 The ODPC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace odpc {

enum class ErrorKind {
  kInvalidArgument,
  kShape,
  kFormat,
  kCorruption,
  kNotFound,
  kDegenerateBatch,
  kConfiguration,
  kGeneration,
  kOffline,
  kIo,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kCorruption: return "corruption";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kDegenerateBatch: return "degenerate_batch";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kGeneration: return "generation";
    case ErrorKind::kOffline: return "offline";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

// Every failure raised by the library carries a kind so that callers (and the
// CLI's exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace odpc
