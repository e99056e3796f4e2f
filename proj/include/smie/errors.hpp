// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace smie {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File contents are malformed or inconsistent (bad magic, dangling ids, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument supplied by the operator.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace smie
