/*
 * Copyright 2026 The isaaq Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
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

namespace isaaq {

// Stable error categories. The numeric values are part of the C API and the
// CLI exit-code contract, so they must not be reordered.
enum class ErrorCode : int {
  io = 1,          // file missing / unreadable / unparseable
  validation = 2,  // dataset or model invariant violated
  not_found = 3,   // unknown id (question, lesson, solver, ...)
  config = 4,      // bad configuration or incompatible shapes
  state = 5,       // missing precomputed artifact (cache, checkpoint)
  internal = 6,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

  // {"error":{"code":"...","message":"..."}} as printed by the CLI.
  std::string to_json() const;

 private:
  ErrorCode code_;
};

}  // namespace isaaq
