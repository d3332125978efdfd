#pragma once

#include <stdexcept>
#include <string>

namespace arr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or layer width mismatch.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Operation invoked in the wrong state (backward before forward, missing snapshot, empty memory).
class StateError : public Error {
public:
    using Error::Error;
};

/// Non-finite values reached a parameter update.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Caller supplied an out-of-range or inconsistent argument.
class InputError : public Error {
public:
    using Error::Error;
};

/// Training configuration inconsistent with the network or memory.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents; the message carries the line or record position.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Parsed data violates a declared constraint.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Result cells that cannot be compared with each other.
class ComparabilityError : public Error {
public:
    using Error::Error;
};

}  // namespace arr
