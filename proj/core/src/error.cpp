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

#include "maco/error.hpp"

namespace maco {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kEmpty: return "empty";
    case ErrorKind::kData: return "data";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, std::string where, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + " error in " + where + ": " + what),
      kind_(kind),
      where_(std::move(where)) {}

void fail(ErrorKind kind, std::string where, const std::string& what) {
  throw Error(kind, std::move(where), what);
}

}  // namespace maco
