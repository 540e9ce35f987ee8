#pragma once

#include <stdexcept>
#include <string>

namespace ser {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed container or corrupt payload while decoding a file.
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// File is structurally valid but uses a codec/layout we do not handle.
class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An operation received an empty input it cannot act on.
class EmptyInput : public Error {
 public:
  using Error::Error;
};

/// Signal is shorter than one analysis frame.
class TooShort : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside its legal lifecycle (e.g. backward
/// before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A gradient contained NaN or infinity; the optimizer step was aborted.
class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

/// A label is not a member of the active label scheme.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// A dataset scan found no parseable audio files.
class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

/// A filename matched a dataset convention but carries an unknown code.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ser
