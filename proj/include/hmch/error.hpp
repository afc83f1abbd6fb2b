#pragma once

#include <stdexcept>
#include <string>

namespace hmch {

/// Precondition or configuration violation by the caller.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Array or file contents whose shape does not match what was expected.
class DimensionMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed on-disk data (raster, cache, config).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear solver failure: singular system, breakdown, or residual above tolerance.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hmch
