// Copyright 2026 The CPA Authors
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

#ifndef CPA_CORE_ERROR_HPP_
#define CPA_CORE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cpa {

// Root of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller supplied arguments outside an operation's domain.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Mathematically undefined input, e.g. the cosine of a zero vector.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// An object was used in a state its contract forbids (unfrozen encoder
// passed to head fine-tuning, querying an untrained model, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by the audit pipeline; carries the name of the stage that failed.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

}  // namespace cpa

#endif  // CPA_CORE_ERROR_HPP_
