#pragma once

#include <stdexcept>
#include <string>

namespace twostream {

// Error categories map to the one-line diagnostic classes the CLI prints.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValueError : std::runtime_error {
    explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ManifestError : std::runtime_error {
    ManifestError(const std::string& msg, std::size_t line)
        : std::runtime_error(msg + " (manifest line " + std::to_string(line) + ")"),
          line_number(line) {}
    std::size_t line_number;
};

// Raised when a training loop has consumed its schedule.
struct TrainingComplete : std::runtime_error {
    TrainingComplete() : std::runtime_error("training complete") {}
};

}  // namespace twostream
