// Copyright 2026 The mtkd Authors
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

// Exception types shared by every mtkd module.

#pragma once

#include <stdexcept>
#include <string>

namespace mtkd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or dimension arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// log of a non-positive value, exp overflow, non-finite gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation precondition (non-scalar loss, bad index...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed binary or JSON input.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing records, unknown ids, label/task mismatches.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtkd
