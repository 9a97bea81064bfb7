#ifndef MODELFIT_ERRORS_HPP
#define MODELFIT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace modelfit {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Expression source could not be parsed. `position` is a 0-based byte
/// offset into the source text.
class ParseError : public Error {
public:
  ParseError(const std::string& msg, std::size_t position)
      : Error(msg + " (at position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

private:
  std::size_t position_;
};

/// Inputs violate a documented precondition: dimension mismatches,
/// malformed data files, invalid configuration.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// A computation produced or detected a numerically unusable result
/// (non-finite objective at the start point, certificate overflow, ...).
class NumericError : public Error {
public:
  using Error::Error;
};

/// Filesystem-level failure (missing file, unwritable output).
class IoError : public Error {
public:
  using Error::Error;
};

} // namespace modelfit

#endif // MODELFIT_ERRORS_HPP
