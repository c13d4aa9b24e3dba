#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace attribench {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input text could not be parsed. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A domain invariant or precondition does not hold.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Retry budget exhausted against a remote endpoint.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Raised by backends for failures that are worth retrying (timeouts, 429, 5xx).
class TransientError : public Error {
 public:
  using Error::Error;
};

/// The endpoint answered with a terminal failure or an unusable payload.
class EndpointError : public Error {
 public:
  EndpointError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class ReplayMissError : public Error {
 public:
  explicit ReplayMissError(std::string hash)
      : Error("replay cassette has no response for request " + hash), hash_(std::move(hash)) {}
  const std::string& hash() const noexcept { return hash_; }

 private:
  std::string hash_;
};

}  // namespace attribench
