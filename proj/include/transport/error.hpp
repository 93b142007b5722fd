#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace transport {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments to an operation (sizes, ranges, flags).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a Dataset or SubsetSpec invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Missing or mismatched columns between a file and its schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A cell could not be parsed as a number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::string column)
      : Error(what), row_(row), column_(std::move(column)) {}
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// Iterative fit stopped at max_iter; carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate)
      : Error(what), last_iterate_(std::move(last_iterate)) {}
  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }

 private:
  Eigen::VectorXd last_iterate_;
};

/// A cross-fitting fold has no usable training rows.
class FoldError : public Error {
 public:
  using Error::Error;
};

/// An estimator's data precondition does not hold (e.g. unobserved columns).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Inference requested on an EIF vector that cannot support it.
class InferenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace transport
