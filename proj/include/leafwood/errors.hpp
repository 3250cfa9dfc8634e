#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace leafwood {

/// Violated precondition (bad argument, size mismatch, invalid index).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Value outside its domain, e.g. a class label that is neither 0 nor 1.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// File or stream could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally inconsistent input, e.g. mixed column counts.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed line in a text input. `line()` is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Training produced a NaN or infinite loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace leafwood
