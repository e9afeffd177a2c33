#pragma once

#include <stdexcept>
#include <string>

namespace hopattn {

// Dimension mismatches between operands.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid experiment or model configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or empty input files.
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inputs on which a diagnostic is undefined (e.g. all-zero feature map).
struct DegenerateInputError : std::runtime_error {
  explicit DegenerateInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller-facing contract was violated (e.g. rows not stochastic).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hopattn
