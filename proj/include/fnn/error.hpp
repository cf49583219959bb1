// Exception types raised by the fnn library.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fnn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GridMismatchError : Error {
  using Error::Error;
};

struct EmptyWindowError : Error {
  using Error::Error;
};

/// Weighted least squares system has fewer usable points than unknowns.
struct RankDeficientError : Error {
  using Error::Error;
};

/// Standardization of a channel with (numerically) zero spread.
struct DegenerateChannelError : Error {
  using Error::Error;
};

struct ShapeMismatchError : Error {
  using Error::Error;
};

struct LabelOutOfRangeError : Error {
  using Error::Error;
};

/// Invalid experiment configuration; `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed input file; `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace fnn
