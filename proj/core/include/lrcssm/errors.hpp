#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lrcssm {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid shapes, out-of-range hyperparameters, bad config keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent data files.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A computation produced a non-finite value. `index` locates it (state
/// coordinate, time step or block, depending on the thrower).
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t index)
      : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// API misuse, e.g. a cache replayed against different parameters.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace lrcssm
