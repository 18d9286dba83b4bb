#pragma once

#include <stdexcept>
#include <string>

namespace sdabn {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad shapes, bad hyperparameters, schema violations.
/// CLI exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

/// Invalid data encountered at runtime: out-of-range labels, malformed
/// datasets. CLI exit code 3.
struct DataError : Error {
    using Error::Error;
};

/// API misuse: backward on a non-scalar, reusing a consumed tape, missing
/// gradients in an optimizer step.
struct UsageError : Error {
    using Error::Error;
};

/// Checkpoint/architecture mismatch. CLI exit code 4.
struct CheckpointError : Error {
    using Error::Error;
};

/// File system or codec failure.
struct IoError : Error {
    using Error::Error;
};

/// NaN or infinity produced by a forward kernel while strict numerics is on.
struct NumericsError : Error {
    using Error::Error;
};

}  // namespace sdabn
