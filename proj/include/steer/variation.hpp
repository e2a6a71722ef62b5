#pragma once

#include <cstddef>
#include <vector>

#include "steer/common.hpp"
#include "steer/expr.hpp"

namespace steer {

enum class InitMethod { Grow, Full };

struct TreeShape {
    std::size_t dims = 1; // number of input variables
    int min_depth = 1;
    int max_depth = 3;
};

// Single random tree. Full trees place functions on every level above
// `depth`; grown trees pick uniformly from functions and terminals (all
// variables plus one constant slot) below the root. When `function_root` is
// set and depth >= 1 the root is always a function.
Tree RandomTree(InitMethod method, int depth, std::size_t dims, Rng& rng, bool function_root = true);

// Position i of the ramped schedule: depths cycle min..max every two trees,
// alternating full then grow.
struct RampSlot {
    int depth;
    InitMethod method;
};
RampSlot RampedSlot(std::size_t i, const TreeShape& shape);

// Ramped half-and-half initialization. Trees above kMaxTreeNodes are redrawn
// for the same slot.
std::vector<Tree> RampedHalfAndHalf(std::size_t count, const TreeShape& shape, Rng& rng);

// Variation operators. Offspring larger than kMaxTreeNodes are rejected in
// favour of an unmodified copy of the first parent.
Tree SubtreeCrossover(const Tree& a, const Tree& b, Rng& rng);
Tree SubtreeMutation(const Tree& a, std::size_t dims, Rng& rng);
Tree OnePointMutation(const Tree& a, std::size_t dims, Rng& rng);

// Splice helper shared by crossover and mutation; exposed for testing the
// size cap deterministically.
Tree SpliceOrKeep(const Tree& parent, std::size_t at, std::span<const Node> donor);

} // namespace steer
