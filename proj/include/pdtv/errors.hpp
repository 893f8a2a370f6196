#pragma once

#include <stdexcept>
#include <string>

namespace pdtv {

/// Mismatched grid shapes, component counts or vector lengths.
struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Out-of-range algorithm or geometry parameters.
struct parameter_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values produced during iteration; message names the quantity.
struct divergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid or unreadable experiment configuration.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File read/write failures; message carries the path.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace pdtv
