#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wlanfp {

/// Root of every error raised by the library. The CLI maps these to the
/// "data error" exit code; anything else is treated as internal.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed something outside an operation's domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input could not be parsed. `line()` is 1-based, 0 when not line oriented.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Checksum mismatch (PLCP CRC or MPDU FCS).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class EncodeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class SurveyError : public Error {
 public:
  using Error::Error;
};

}  // namespace wlanfp
