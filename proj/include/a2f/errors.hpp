#pragma once

#include <stdexcept>
#include <string>

namespace a2f {

// Base class for all library errors. The CLI maps these to exit code 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid shapes, incompatible dimensions, unsupported configuration values.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem and serialization failures.
struct StorageError : Error {
    using Error::Error;
};

// Metric / evaluation failures (dimension mismatch, image too small, ...).
struct EvalError : Error {
    using Error::Error;
};

// Non-finite values encountered where finite math is required.
struct NumericError : Error {
    using Error::Error;
};

enum class CheckpointFault {
    BadMagic,
    BadVersion,
    BadChecksum,
    Truncated,
    ShapeMismatch,
    MissingEntry,
    Io,
};

struct CheckpointError : StorageError {
    CheckpointFault fault;
    CheckpointError(CheckpointFault f, const std::string& msg)
        : StorageError(msg), fault(f) {}
};

}  // namespace a2f
