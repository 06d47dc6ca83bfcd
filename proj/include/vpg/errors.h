// Copyright 2026 The VPG Authors
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
#include <vector>

namespace vpg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VPG_DEFINE_ERROR(Name)      \
  class Name : public Error {       \
   public:                          \
    using Error::Error;             \
  }

VPG_DEFINE_ERROR(DimensionError);
VPG_DEFINE_ERROR(InvalidArgument);
VPG_DEFINE_ERROR(StoreError);
VPG_DEFINE_ERROR(ExtractionError);
VPG_DEFINE_ERROR(UnknownEntityError);
VPG_DEFINE_ERROR(DuplicateKeyError);
VPG_DEFINE_ERROR(InsufficientCalibrationData);
VPG_DEFINE_ERROR(LabelingError);
VPG_DEFINE_ERROR(InsufficientTriplets);
VPG_DEFINE_ERROR(EmptyEvaluationError);
VPG_DEFINE_ERROR(DivisionByZero);
VPG_DEFINE_ERROR(FormatError);

#undef VPG_DEFINE_ERROR

// Carries every violation found while validating a configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// Malformed input line in a JSONL file; line numbers are 1-based.
class ParseError : public Error {
 public:
  ParseError(std::string file, size_t line, const std::string& what);
  size_t line() const { return line_; }
  const std::string& file() const { return file_; }

 private:
  std::string file_;
  size_t line_;
};

}  // namespace vpg
