#pragma once

#include <stdexcept>
#include <string>

namespace fgn {

/// Incompatible tensor extents.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid hyperparameter or run configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// API misuse, e.g. backward on a non-scalar or a consumed tape.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Attention mask leaves a query row with no visible key.
class DegenerateMaskError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Checkpoint decoding failures.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class CheckpointMagicError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class CheckpointLengthError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

}  // namespace fgn
