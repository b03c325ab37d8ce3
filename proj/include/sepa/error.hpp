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

#ifndef SEPA_ERROR_HPP
#define SEPA_ERROR_HPP

#include <stdexcept>
#include <string>

namespace sepa {

// Error taxonomy shared by the library and the CLI. Each class carries the
// process exit code the CLI maps it to:
//   1 usage / configuration, 2 data / file format, 3 numeric failure,
//   4 tolerance violation.
class Error : public std::runtime_error {
 public:
  Error(int exit_code, const std::string& what)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

// Bad flags, bad config values, infeasible parameter combinations.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(1, what) {}
};

// Unreadable or malformed input files.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(2, what) {}
};

// NaN/Inf propagation, divergence, numeric-domain violations.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(3, what) {}
};

// A verification suite ran but exceeded its tolerance.
class ToleranceError : public Error {
 public:
  explicit ToleranceError(const std::string& what) : Error(4, what) {}
};

// API contract violations: shape mismatches, index range errors, calling
// backward twice, decoding without a target. Programming errors rather than
// input errors, but still mapped to a nonzero exit (3) when they escape.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(3, what) {}
};

}  // namespace sepa

#endif  // SEPA_ERROR_HPP
