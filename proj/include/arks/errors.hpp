#pragma once

#include <stdexcept>
#include <string>

namespace arks {

// Root of every failure raised by the library. The CLI maps subclasses onto
// exit codes (config 1, numerical 2, I/O 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Raised when an envelope's inner supremum is detected to be unbounded.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), message_(what), line_(line) {}
  std::size_t line() const { return line_; }
  // Message without the line suffix.
  const std::string& message() const { return message_; }

 private:
  std::string message_;
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Re-raises the in-flight exception with `where` prefixed to its message,
// keeping the error category. Call only inside a catch block.
[[noreturn]] void rethrow_with_context(const std::string& where);

}  // namespace arks
