#pragma once

#include <stdexcept>
#include <string>

namespace glf {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy an operation's contract.
struct ShapeError : Error {
    using Error::Error;
};

/// A floating-point invariant was violated (NaN/Inf where finiteness is required,
/// diverging loss, rank-deficient solve, ...).
struct NumericError : Error {
    using Error::Error;
};

/// Bad or inconsistent run configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// File I/O or parse failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace glf
