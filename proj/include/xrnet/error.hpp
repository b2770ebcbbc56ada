#pragma once

#include <stdexcept>
#include <string>

namespace xrnet {

// Error taxonomy shared by the whole library. The CLI maps these onto its
// exit-code contract: usage/config/data -> 2, numeric -> 3, artifact -> 4.

// Invalid shapes, geometry, hyperparameters, or malformed configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Problems with input data: dataset layout, undecodable images, bad labels.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (loss, gradients, inputs).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or incompatible persisted artifacts (checkpoints, manifests).
struct ArtifactError : std::runtime_error {
    explicit ArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse: calls out of order, unknown flags, missing arguments.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace xrnet
