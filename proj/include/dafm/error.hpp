#pragma once

#include <stdexcept>
#include <string>

namespace dafm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied an invalid argument, configuration or shape.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (CSV content, transform domain violations).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Rank deficiency, non-convergence, divergence or a failed line search.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dafm
