#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace neoc {

// Base for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed expression or problem-file text.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset, std::size_t line = 0)
      : Error(format(message, offset, line)), offset_(offset), line_(line), detail_(message) {}

  std::size_t offset() const noexcept { return offset_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string format(const std::string& message, std::size_t offset, std::size_t line) {
    if (line > 0) return "line " + std::to_string(line) + ": " + message;
    return "syntax error at offset " + std::to_string(offset) + ": " + message;
  }

  std::size_t offset_;
  std::size_t line_;
  std::string detail_;
};

// Evaluation outside the domain of an operation (sqrt of a negative, 1/0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A problem definition violates one of its invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A numerical routine failed: singular system, divergence, no stabilizing gain, ...
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace neoc
