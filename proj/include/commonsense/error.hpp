#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace commonsense {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input. The CLI maps this to exit code 1.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what) {}
  ValidationError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  /// 1-based line of the offending record, 0 when not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

/// A computation that is undefined for the given data (zero variance, empty
/// group, singular system, ...).
class ComputationError : public Error {
 public:
  using Error::Error;
};

/// Transport or endpoint failure during elicitation.
class NetworkError : public Error {
 public:
  using Error::Error;
};

}  // namespace commonsense
