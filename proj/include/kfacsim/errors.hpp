// Copyright 2026 The kfacsim Authors
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

namespace kfacsim {

// Base class for every error raised by the library.  The CLI maps these to
// process exit codes: ConfigError -> 1, everything else -> 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape mismatch between operands or an operand with an illegal shape.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what) {}
};

// User-supplied configuration is invalid.  Messages name the offending field.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// An operation was invoked before its preconditioned state was established
// (e.g. preconditioning before any eigen basis exists).
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(what) {}
};

// Matrix inversion hit a pivot that is numerically zero.
class SingularMatrixError : public Error {
 public:
  explicit SingularMatrixError(const std::string& what) : Error(what) {}
};

// An internal cross-check failed, e.g. simulated worker replicas diverged.
class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& what) : Error(what) {}
};

}  // namespace kfacsim
