#pragma once

#include <stdexcept>
#include <string>

namespace uom {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input (CSV, JSON).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input whose values violate an invariant (non-finite entries, bad weights).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Binary layout disagrees with its header.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// The MLE estimator is undefined on the given neighbor table.
class EstimatorError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// compose_union could not reach the requested gap.
class PlacementError : public Error {
 public:
  using Error::Error;
};

/// Checksum mismatch between a manifest and its parameter files.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace uom
