#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace steer {

using Rng = std::mt19937_64;

// Machine-readable failure classes. The CLI maps them onto exit codes and the
// service onto response codes.
enum class ErrorCode {
    InvalidConfig,
    Data,
    Structural,
    NotFound,
    Conflict,
    Gone,
    NoQuery,
    Runtime,
};

std::string_view ToString(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message)
        , code_(code)
    {
    }

    ErrorCode Code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Derive an independent generator for a named sub-stream of a run so that
// adding draws in one component never shifts another.
Rng SplitRng(std::uint64_t seed, std::uint64_t stream);

} // namespace steer
