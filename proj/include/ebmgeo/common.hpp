// Shared error types and small helpers used across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace ebmgeo {

// Error categories map onto CLI exit codes (see README):
//   ConfigError -> 2, MissingArtifactError -> 3, NumericalError -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Programming-contract violations (shape mismatches, misuse of the tape).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline std::string shape_str(long rows, long cols) {
    return "[" + std::to_string(rows) + ", " + std::to_string(cols) + "]";
}

}  // namespace ebmgeo
