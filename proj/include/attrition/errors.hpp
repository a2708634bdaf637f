#pragma once

#include <stdexcept>
#include <string>

namespace attrition {

// Bad configuration or CLI usage. Mapped to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input data violates a documented contract. Mapped to exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace attrition
