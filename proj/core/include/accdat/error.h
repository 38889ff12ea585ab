// Copyright 2026 The accdat Authors.
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

#ifndef ACCDAT_ERROR_H_
#define ACCDAT_ERROR_H_

#include <stdexcept>
#include <string>

namespace accdat {

/// Base of every error raised by the library. `exit_code()` is the process
/// status the command-line tool reports for this category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 4; }
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

/// Malformed or truncated on-disk container (feature file, checkpoint).
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Target sequence cannot be aligned to the given number of frames.
class InfeasibleTarget : public Error {
 public:
  using Error::Error;
};

class ResourceLimit : public Error {
 public:
  using Error::Error;
};

/// Operation requested on an object in the wrong state, e.g. evaluating
/// batch norm before running statistics exist.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Internal contract violated (frozen parameters drifted, etc.).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace accdat

#endif  // ACCDAT_ERROR_H_
