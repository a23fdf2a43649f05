#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shipid {

// Broad failure classes. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  Usage,
  Io,
  Schema,
  Malformed,
  Numeric,
  Divergence,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(ErrorKind::Schema, what) {}
};

// Parse failure with the 1-based line number of the offending line.
class MalformedFileError : public Error {
 public:
  MalformedFileError(const std::string& what, std::size_t line)
      : Error(ErrorKind::Malformed, what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Singular mass matrix, degenerate statistics, shape mismatches.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

// A rollout produced a non-finite or runaway state.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step, std::size_t window = 0)
      : Error(ErrorKind::Divergence, what), step_(step), window_(window) {}
  std::size_t step() const noexcept { return step_; }
  std::size_t window() const noexcept { return window_; }

 private:
  std::size_t step_;
  std::size_t window_;
};

}  // namespace shipid
