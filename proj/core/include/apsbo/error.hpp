// Copyright 2026 The apsbo Authors
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

#ifndef APSBO_ERROR_HPP_
#define APSBO_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace apsbo {

// Machine-parsable failure categories. The CLI prints these verbatim and the
// HTTP service maps them onto status codes.
enum class ErrorCategory {
  kInvalidArgument,
  kNumericalFailure,
  kFittingFailure,
  kPhaseViolation,
  kStaleRevision,
  kNotFound,
  kValidation,
  kMigrationRequired,
  kIo,
};

std::string_view to_string(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error(ErrorCategory::kInvalidArgument, message) {}
};

class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& message)
      : Error(ErrorCategory::kNumericalFailure, message) {}
};

class FittingFailure : public Error {
 public:
  explicit FittingFailure(const std::string& message)
      : Error(ErrorCategory::kFittingFailure, message) {}
};

class PhaseViolation : public Error {
 public:
  explicit PhaseViolation(const std::string& message)
      : Error(ErrorCategory::kPhaseViolation, message) {}
};

class StaleRevision : public Error {
 public:
  explicit StaleRevision(const std::string& message)
      : Error(ErrorCategory::kStaleRevision, message) {}
};

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& message)
      : Error(ErrorCategory::kNotFound, message) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error(ErrorCategory::kValidation, message) {}
};

class MigrationRequired : public Error {
 public:
  explicit MigrationRequired(const std::string& message)
      : Error(ErrorCategory::kMigrationRequired, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message)
      : Error(ErrorCategory::kIo, message) {}
};

}  // namespace apsbo

#endif  // APSBO_ERROR_HPP_
