#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace deocc {

// Violated precondition or malformed argument (wrong arity, shape mismatch, ...).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
public:
    GenerationError(const std::string& what, std::uint64_t seed)
        : std::runtime_error(what + " (figure seed " + std::to_string(seed) + ")"), seed_(seed) {}
    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised by sample_loop when the denoiser produces non-finite values.
class SamplingError : public std::runtime_error {
public:
    SamplingError(const std::string& what, int step)
        : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

class OptimizationError : public std::runtime_error {
public:
    OptimizationError(const std::string& what, int step)
        : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

}  // namespace deocc
