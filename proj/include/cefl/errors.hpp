#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cefl {

/// Invalid or inconsistent configuration. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A caller broke an API precondition (e.g. asked an honest oracle about a Byzantine agent).
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// An iterate left the finite region guarded by the divergence threshold.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t round, const std::string& what)
        : std::runtime_error("round " + std::to_string(round) + ": " + what), round_(round) {}

    std::size_t round() const noexcept { return round_; }

private:
    std::size_t round_;
};

}  // namespace cefl
