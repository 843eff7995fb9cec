#pragma once

#include <stdexcept>
#include <string>

namespace gradkit {

// Error taxonomy shared by all modules. Everything derives from
// std::runtime_error so callers can catch coarsely or precisely.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape-error: " + msg) {}
};
struct RegistryError : std::runtime_error {
    explicit RegistryError(const std::string& msg) : std::runtime_error("registry-error: " + msg) {}
};
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract-error: " + msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric-error: " + msg) {}
};
struct DegenerateInputError : std::runtime_error {
    explicit DegenerateInputError(const std::string& msg)
        : std::runtime_error("degenerate-input: " + msg) {}
};
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format-error: " + msg) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io-error: " + msg) {}
};
struct CorruptionError : std::runtime_error {
    explicit CorruptionError(const std::string& msg)
        : std::runtime_error("corruption-error: " + msg) {}
};

} // namespace gradkit
