#pragma once

#include <stdexcept>
#include <string>

namespace fdl {

/// Shape or rank disagreement between tensor operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value (divisibility, ranges, unknown variant strings).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Input data is empty, insufficient, or statistically degenerate.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed file contents (netpbm, FDLT, checkpoints).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem-level failure (open, read, write, rename).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite value where a finite one is required (training divergence, bad loss).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fdl
