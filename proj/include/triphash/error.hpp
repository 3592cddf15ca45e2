#pragma once

#include <stdexcept>
#include <string>

namespace triphash {

/// File and stream failures: missing files, bad magic bytes, truncated payloads.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid run configuration or command usage.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite losses, gradients or parameters encountered during training.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace triphash
