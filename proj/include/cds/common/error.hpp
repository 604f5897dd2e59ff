// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cds {

// Base of every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid user-facing configuration (bad hyperparameter, unknown key, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file on disk (dataset directory, checkpoint, feature file).
class FormatError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Evaluation protocol violated (e.g. true pair missing from candidates).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace cds
