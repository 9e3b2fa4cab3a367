#pragma once

#include <stdexcept>
#include <string>

namespace sigscat {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not agree with an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf appeared where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed weights container or other on-disk format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value, unknown key or inconsistent settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File-system and image-decoding failures; the message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sigscat
