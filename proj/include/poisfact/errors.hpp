#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace poisfact {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed delimited input. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed line with an unacceptable count value.
class ValueError : public ParseError {
 public:
  using ParseError::ParseError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  EmptyDatasetError() : Error("dataset contains no interactions") {}
};

/// A Poisson term was evaluated at a non-positive rate.
class DomainError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kNoIndex = std::numeric_limits<std::size_t>::max();

/// Factors became non-finite. `iteration` is 1-based, `vector_index` names
/// the offending row when known.
class NumericFailure : public Error {
 public:
  NumericFailure(const std::string& what, std::size_t iteration = 0,
                 std::size_t vector_index = kNoIndex)
      : Error(what), iteration_(iteration), vector_index_(vector_index) {}

  std::size_t iteration() const noexcept { return iteration_; }
  std::size_t vector_index() const noexcept { return vector_index_; }

 private:
  std::size_t iteration_;
  std::size_t vector_index_;
};

/// Every non-cold row of a factor matrix collapsed to zero.
class DegenerateSolution : public NumericFailure {
 public:
  using NumericFailure::NumericFailure;
};

class UndefinedCorrelation : public Error {
 public:
  UndefinedCorrelation() : Error("correlation undefined: zero variance") {}
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Model and data disagree on dimensions or identifier domain.
class DataMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ModelFormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace poisfact
