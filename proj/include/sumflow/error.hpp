#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sumflow {

/// Base class for all errors thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input documents (model files, datasets). Carries a position.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what + " (line " + std::to_string(line) + ", column " +
              std::to_string(column) + ")"),
        message_(what),
        line_(line),
        column_(column) {}

  /// The description without the appended position, for re-wrapping.
  const std::string& message() const { return message_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::string message_;
  std::size_t line_;
  std::size_t column_;
};

/// A gradient or likelihood became non-finite; remembers the sample that
/// caused it (if any).
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::ptrdiff_t sample = -1)
      : Error(sample >= 0 ? what + " (sample " + std::to_string(sample) + ")"
                          : what),
        sample_(sample) {}

  /// Index of the offending sample, or -1 if not sample related.
  std::ptrdiff_t sample() const { return sample_; }

 private:
  std::ptrdiff_t sample_;
};

}  // namespace sumflow
