#pragma once

#include <stdexcept>
#include <string>

namespace objn {

// Error categories map onto the CLI exit-code contract:
//   ConfigError -> 2, DataError -> 3, ModelError -> 4, IoError -> 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ModelError : std::runtime_error {
  explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Contract violations in the numeric kernels (shape mismatch, bad layer
// parameters, non-finite input).
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

}  // namespace objn
