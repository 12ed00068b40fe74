#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fxplain {

/// Root of every error raised by the library. `exit_code()` is what the CLI
/// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Malformed input data. `row` is 1-based (header = row 1) when known, else 0.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row = 0)
      : Error(row ? what + " (row " + std::to_string(row) + ")" : what), detail_(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }
  /// The message without the row suffix.
  const std::string& detail() const noexcept { return detail_; }
  int exit_code() const noexcept override { return 3; }

 private:
  std::string detail_;
  std::size_t row_;
};

class BackendError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// Network failure or an HTTP status that survived all retries.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The backend answered but the payload was not what the API promises.
class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The response cache could not be read or written.
class CacheError : public BackendError {
 public:
  using BackendError::BackendError;
};

class TrainingError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

/// A pipeline stage needs an artifact that an earlier subcommand produces.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 6; }
};

/// Tensor or vector dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace fxplain
