#pragma once

#include <stdexcept>
#include <string>

namespace dartvae {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/matrix dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside its contract (wrong rule kind,
/// invalid fuzzifier, too few samples, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared where the computation requires finite input.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed rule file or config document.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Dataset manifest/records could not be loaded or validated.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or hit a non-finite loss.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace dartvae
