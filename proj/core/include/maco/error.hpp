// Copyright 2026 The MACO Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
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

namespace maco {

enum class ErrorKind {
  kShape,       // extents disagree with what an op or layer expects
  kRange,       // index or count outside the permitted interval
  kEmpty,       // an input set that must be non-empty was empty
  kData,        // dataset content problem (missing class, too few images)
  kFormat,      // malformed or incompatible file
  kIo,          // filesystem failure
  kConfig,      // invalid configuration value
};

std::string_view to_string(ErrorKind kind);

/// Structured failure raised by every module. `where` names the layer path,
/// op or file that rejected its input.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string where, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& where() const noexcept { return where_; }

 private:
  ErrorKind kind_;
  std::string where_;
};

[[noreturn]] void fail(ErrorKind kind, std::string where, const std::string& what);

}  // namespace maco
