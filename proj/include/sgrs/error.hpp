#pragma once

#include <stdexcept>
#include <string>

namespace sgrs {

// Root of every error thrown by the library. Each subclass maps to one
// failure class so callers (the CLI in particular) can translate it to an
// exit code without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// A forward computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller violated a precondition that is not about shapes (non-scalar loss,
// misaligned gradient lists, probabilities that do not sum to one, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class EmptyMaskError : public Error {
 public:
  using Error::Error;
};

}  // namespace sgrs
