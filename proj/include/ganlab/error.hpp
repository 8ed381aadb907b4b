#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ganlab {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Incompatible tensor shapes; the message names both shapes.
struct ShapeError : Error {
    using Error::Error;
};

/// Mathematical domain violation (log/sqrt of non-positive input, zero-norm
/// row under L2 normalization, non-positive link value, ...).
struct DomainError : Error {
    using Error::Error;
};

/// Malformed configuration or unknown key.
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed input file (IDX parsing, checkpoint loading).
struct ParseError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

/// Raised when a training step produces a non-finite loss or gradient.
/// Carries the step index at which divergence was detected.
struct DivergenceError : Error {
    std::int64_t step;
    DivergenceError(std::int64_t at_step, const std::string& msg)
        : Error("diverged at step " + std::to_string(at_step) + ": " + msg),
          step(at_step) {}
};

}  // namespace ganlab
