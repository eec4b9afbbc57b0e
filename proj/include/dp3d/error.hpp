#pragma once

#include <stdexcept>
#include <string>

namespace dp3d {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented domain (timestep, label, n, ...).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or corrupt files (containers, checkpoints, configs).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf detected in a computation; the message names the stage.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A text-encoder backend could not be loaded or queried.
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace dp3d
