#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "steer/common.hpp"
#include "steer/expr.hpp"
#include "steer/variation.hpp"

namespace steer::testing {

inline Tree T(const std::string& infix) { return ParseInfix(infix); }

inline Tree RandomTestTree(std::size_t dims, Rng& rng, int max_depth = 4)
{
    std::uniform_int_distribution<int> depth(1, max_depth);
    std::bernoulli_distribution full(0.5);
    for (;;) {
        auto t = RandomTree(full(rng) ? InitMethod::Full : InitMethod::Grow, depth(rng), dims, rng);
        if (t.Size() <= kMaxTreeNodes) {
            return t;
        }
    }
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path ScratchDir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("steer-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path DataFile(const std::string& name) { return std::filesystem::path(STEER_DATA_DIR) / name; }

} // namespace steer::testing
