// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace aagn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or resolutions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Bad user-supplied configuration (unknown joint, bad flag, missing key...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A value left its allowed domain (|mu| > 1, query out of bounds...).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or payload.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace aagn
