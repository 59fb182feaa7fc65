// Copyright 2026 The pmcmc Authors.
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

namespace pmcmc {

/// Raised when an input violates a documented precondition (bad shape,
/// out-of-range hyperparameter, malformed file). The CLI maps it to exit 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation cannot proceed numerically (non-SPD covariance,
/// all weights underflowing, zero acceptance). The CLI maps it to exit 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a worker attempts a second cross-machine message.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

[[noreturn]] inline void fail_validation(const std::string& what) { throw ValidationError(what); }
[[noreturn]] inline void fail_numerical(const std::string& what) { throw NumericalError(what); }

inline void require(bool ok, const std::string& what) {
  if (!ok) fail_validation(what);
}

}  // namespace detail
}  // namespace pmcmc
