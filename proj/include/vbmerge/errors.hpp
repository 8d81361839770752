#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vbmerge {

// Base for every error raised by the library. The CLI maps subclasses onto
// exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class MissingValueError : public Error {
 public:
  MissingValueError(std::string file, std::size_t row, std::size_t column)
      : Error("missing value in " + file + " at row " + std::to_string(row) +
              ", column " + std::to_string(column)),
        file_(std::move(file)),
        row_(row),
        column_(column) {}

  const std::string& file() const { return file_; }
  // 1-based data row (header excluded) and 1-based column.
  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::string file_;
  std::size_t row_;
  std::size_t column_;
};

class UnknownAttributeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Enumeration would exceed the configured assignment budget.
class SizeError : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  NumericalFailure(std::size_t sweep, const std::string& detail)
      : Error("non-finite ELBO at sweep " + std::to_string(sweep) + ": " +
              detail),
        sweep_(sweep) {}

  std::size_t sweep() const { return sweep_; }

 private:
  std::size_t sweep_;
};

}  // namespace vbmerge
