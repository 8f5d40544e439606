#pragma once

#include <stdexcept>
#include <string>

namespace dyn4d {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be found, opened or decoded.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a documented invariant (shapes, ranges, orthonormality).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A sampling or rendering precondition failed ("empty ray", "empty depth").
class RenderError : public Error {
 public:
  using Error::Error;
};

/// A remote peer answered with a payload that does not match the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Connection failure or timeout while talking to a remote service. Retriable.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A remote service answered with HTTP status >= 400.
class HttpStatusError : public Error {
 public:
  HttpStatusError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// Optimization produced a non-finite loss term.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace dyn4d
