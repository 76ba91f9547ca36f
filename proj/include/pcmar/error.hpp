#pragma once

#include <stdexcept>
#include <string>

namespace pcmar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure; the message always carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk tensor. Subclasses distinguish the failure.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace pcmar
