#pragma once

#include <stdexcept>
#include <string>

namespace mclkit {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Iterative numerics (SVD) hit the iteration cap.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// An object was used out of protocol (e.g. backward without a cached forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// Invalid argument or configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training produced a NaN or Inf loss.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

// Binary file errors. Each failure mode is its own type so callers can tell them apart.
class FormatError : public Error {
public:
    using Error::Error;
};
class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};
class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};
class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};
class TruncatedError : public FormatError {
public:
    using FormatError::FormatError;
};
class LabelRangeError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace mclkit
