#pragma once

#include <stdexcept>
#include <string>

namespace zoomprop {

// Base class for every failure raised by the library. Each subclass maps to
// one error kind so callers can catch selectively.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidBox : public Error {
 public:
  using Error::Error;
};

class OutOfBounds : public Error {
 public:
  using Error::Error;
};

class EmptyResult : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class GenerationFailure : public Error {
 public:
  using Error::Error;
};

class ModelMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace zoomprop
