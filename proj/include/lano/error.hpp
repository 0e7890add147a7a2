#pragma once

#include <stdexcept>
#include <string>

namespace lano {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes, axes out of range, rank violations.
struct ShapeError : Error {
    using Error::Error;
};

/// Malformed config files, manifests, checkpoints, CLI values.
struct ConfigError : Error {
    using Error::Error;
};

/// Filesystem and (de)serialization failures.
struct IoError : Error {
    using Error::Error;
};

/// Numeric failures: non-finite losses, solver non-convergence,
/// zero-norm reference fields.
struct NumericError : Error {
    using Error::Error;
};

/// Raised when the training loop hits a non-finite loss.
struct TrainDivergedError : NumericError {
    TrainDivergedError(const std::string& msg, double lr, int epoch, int batch)
        : NumericError(msg), last_lr(lr), epoch(epoch), batch_index(batch) {}
    double last_lr;
    int epoch;
    int batch_index;
};

}  // namespace lano
