#ifndef OBLIQUE_ERRORS_HPP
#define OBLIQUE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace oblique {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonFiniteError : Error {
  using Error::Error;
};

struct ShapeMismatchError : Error {
  using Error::Error;
};

struct AllZeroRowsError : Error {
  using Error::Error;
};

// Raised when 1 - l_i/(m*pi_i) falls at or below the floor for a drawn index;
// signals that m is too small relative to theta_max * p.
struct DebiasUndefinedError : Error {
  using Error::Error;
};

struct NotPowerOfTwoError : Error {
  using Error::Error;
};

struct InvalidSparsityError : Error {
  using Error::Error;
};

struct NoConvergenceError : Error {
  using Error::Error;
};

struct SingularIntermediateError : Error {
  using Error::Error;
};

// gaussian_inverse_scale with m <= p + 1.
struct UndefinedScaleError : Error {
  using Error::Error;
};

// A weighted term l_i/(m*pi_i) with l_i > 0 and pi_i = 0.
struct UndefinedTermError : Error {
  using Error::Error;
};

struct AllTrialsRejectedError : Error {
  using Error::Error;
};

struct BudgetExceededError : Error {
  using Error::Error;
};

struct InvalidDimensionsError : Error {
  using Error::Error;
};

struct CsvParseError : Error {
  CsvParseError(const std::string& msg, long row, long col)
      : Error(msg), row(row), col(col) {}
  long row;  // 1-based
  long col;  // 1-based
};

struct RaggedRowsError : Error {
  using Error::Error;
};

struct ZeroVarianceError : Error {
  ZeroVarianceError(const std::string& msg, long column)
      : Error(msg), column(column) {}
  long column;  // 0-based column index
};

struct InsufficientNonzeroError : Error {
  using Error::Error;
};

struct InvalidConfigError : Error {
  using Error::Error;
};

}  // namespace oblique

#endif  // OBLIQUE_ERRORS_HPP
