#pragma once

#include <stdexcept>
#include <string>

namespace pkground {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data: malformed files, violated invariants, missing labels.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A remote backend answered, but the answer breaks the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// A remote backend could not be reached. Safe to retry.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempt" +
              (attempts == 1 ? "" : "s") + ")"),
        attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Invalid configuration supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace pkground
