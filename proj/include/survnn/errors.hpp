#pragma once

#include <stdexcept>
#include <string>

namespace survnn {

// Thrown for invalid configuration or argument values. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown for file format / I/O problems. CLI exit code 3.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a training run produces NaN/Inf. CLI exit code 4.
struct NumericAbort : std::runtime_error {
    explicit NumericAbort(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace survnn
