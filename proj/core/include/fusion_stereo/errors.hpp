#pragma once

#include <stdexcept>
#include <string>

namespace fstereo {

/// Tensor extents or parameter fields do not line up. The message names the
/// offending dimension.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration (bad flag value, inconsistent network config, ...).
/// Mapped to process exit code 2 by the CLI.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Missing, corrupt or inconsistent input data. CLI exit code 3.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training produced a non-finite loss. CLI exit code 4.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fstereo
