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

#include "apsbo/error.hpp"

namespace apsbo {

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidArgument: return "invalid-argument";
    case ErrorCategory::kNumericalFailure: return "numerical-failure";
    case ErrorCategory::kFittingFailure: return "fitting-failure";
    case ErrorCategory::kPhaseViolation: return "phase-violation";
    case ErrorCategory::kStaleRevision: return "stale-revision";
    case ErrorCategory::kNotFound: return "not-found";
    case ErrorCategory::kValidation: return "validation";
    case ErrorCategory::kMigrationRequired: return "migration-required";
    case ErrorCategory::kIo: return "io-error";
  }
  return "unknown";
}

}  // namespace apsbo
