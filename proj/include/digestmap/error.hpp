// Copyright 2026 The digestmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace digestmap {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable tag surfaced by the CLI.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Malformed or invalid record in an input file.
class DataError : public Error {
 public:
  DataError(std::string message, std::size_t line, std::string field)
      : Error(format(message, line, field)), line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(const std::string& message, std::size_t line,
                            const std::string& field) {
    std::string out = message;
    if (line > 0) out += " (line " + std::to_string(line);
    if (!field.empty()) out += (line > 0 ? ", field '" : " (field '") + field + "'";
    if (line > 0 || !field.empty()) out += ")";
    return out;
  }

  std::size_t line_;
  std::string field_;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "parse_error"; }
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "validation_error"; }
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain_error"; }
};

/// Caller broke an operation's precondition (wrong class, bad parameter).
class ContractError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract_error"; }
};

/// A distribution or regression could not be fitted to the data given.
class FitError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "fit_error"; }
};

/// Reference to an entity (candidate, batch) that does not exist.
class ReferenceError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "reference_error"; }
};

class GenerationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "generation_error"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io_error"; }
};

}  // namespace digestmap
