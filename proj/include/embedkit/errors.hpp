#pragma once

#include <stdexcept>
#include <string>

namespace embedkit {

// Invalid user-facing configuration or input data. The CLI maps this to
// exit code 1; everything else that escapes maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace embedkit
