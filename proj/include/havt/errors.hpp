#pragma once

#include <stdexcept>
#include <string>

namespace havt {

// Root of every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration values or inconsistent config combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A domain object violates one of its invariants. The message names it.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where a finite value is required (loss terms, inputs).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace havt
