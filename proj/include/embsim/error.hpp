#pragma once

#include <stdexcept>
#include <string>

namespace embsim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or malformed input data. The CLI maps this family to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

/// Bad magic, unsupported version, truncation or inconsistent sizes in a binary file.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

class NotFoundError : public DataError {
 public:
  using DataError::DataError;
};

/// Another writer holds the lock for a store entry.
class StoreBusyError : public DataError {
 public:
  using DataError::DataError;
};

/// Embedding provider or transport failure. The CLI maps this to exit code 3.
class ProviderError : public Error {
 public:
  using Error::Error;
};

}  // namespace embsim
