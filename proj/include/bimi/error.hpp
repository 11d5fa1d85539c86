#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bimi {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad dimensions, out-of-range tokens, invalid configuration values.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A Sample or manifest record violates its invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Missing files, unwritable paths.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised while reading a manifest; carries the 1-based line number.
class ManifestError : public ValidationError {
 public:
  ManifestError(std::size_t line, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace bimi
