// Copyright 2026 The lknn Authors
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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lknn {

using TokenId = std::uint32_t;
using SourceId = std::uint64_t;

// Base of every error the library throws. Callers that only care about
// success/failure catch this; the CLI maps the two subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown keys, invalid schemes, missing required files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad input data: malformed files, out-of-range ids, dimension mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

// A binary file whose structure is invalid. `field()` names the offending
// header field or block.
class FormatError : public DataError {
 public:
  FormatError(std::string field, const std::string& what)
      : DataError(what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace lknn
