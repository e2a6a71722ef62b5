#include "steer/common.hpp"

namespace steer {

std::string_view ToString(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidConfig:
        return "invalid_config";
    case ErrorCode::Data:
        return "data_error";
    case ErrorCode::Structural:
        return "structural_error";
    case ErrorCode::NotFound:
        return "not_found";
    case ErrorCode::Conflict:
        return "conflict";
    case ErrorCode::Gone:
        return "gone";
    case ErrorCode::NoQuery:
        return "no_query";
    case ErrorCode::Runtime:
        return "runtime_error";
    }
    return "unknown";
}

Rng SplitRng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq { std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream), std::uint32_t(stream >> 32) };
    return Rng(seq);
}

} // namespace steer
