// Copyright 2026 The ShiftQuant Authors
// SPDX-License-Identifier: Apache-2.0
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

#ifndef SHIFTQUANT_ERRORS_H_
#define SHIFTQUANT_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shiftquant {

// Base of every error thrown by the library. Callers that only care about
// "something in shiftquant failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameter outside its documented domain (bitwidth, eps, trial counts).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape, axis or extent mismatch.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input for which the requested quantity is undefined (all-zero ranges,
// non-finite values, zero deviation).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Integer accumulation would not fit the 64-bit accumulator.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Operation requested under a rounding mode it is not defined for.
class ModeError : public Error {
 public:
  using Error::Error;
};

// Problem size above a configured search limit.
class ResourceLimitError : public Error {
 public:
  using Error::Error;
};

// Quantization scale placed on an axis the integer kernel cannot absorb.
class GranularityError : public Error {
 public:
  using Error::Error;
};

// Malformed binary or text file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Text parse failure with a 1-based line number (0 when not line-oriented).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Numerical procedure did not reach its tolerance.
class ToleranceError : public Error {
 public:
  using Error::Error;
};

// Loss became non-finite during training.
class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(const std::string& what, int epoch)
      : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// An internal cross-check (backend checksum, bound) failed.
class CorrectnessError : public Error {
 public:
  using Error::Error;
};

}  // namespace shiftquant

#endif  // SHIFTQUANT_ERRORS_H_
