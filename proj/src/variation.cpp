#include "steer/variation.hpp"

#include <algorithm>
#include <iterator>

namespace steer {

namespace {

    Node RandomTerminal(std::size_t dims, Rng& rng)
    {
        std::uniform_int_distribution<std::size_t> pick(0, dims); // dims == constant slot
        auto slot = pick(rng);
        if (slot == dims) {
            std::uniform_int_distribution<int> grid(0, kConstGridSize - 1);
            return Node::Constant(ConstantFromGrid(grid(rng)));
        }
        return Node::Variable(static_cast<std::uint16_t>(slot));
    }

    Op RandomFunction(Rng& rng)
    {
        std::uniform_int_distribution<std::size_t> pick(0, kFunctionOps.size() - 1);
        return kFunctionOps[pick(rng)];
    }

    void Grow(std::vector<Node>& out, InitMethod method, int level, int depth, std::size_t dims, Rng& rng, bool function_root)
    {
        bool function = false;
        if (level < depth) {
            if (method == InitMethod::Full || (level == 0 && function_root)) {
                function = true;
            } else {
                auto functions = kFunctionOps.size();
                // functions, then variables, then the constant slot
                std::uniform_int_distribution<std::size_t> pick(0, functions + dims);
                function = pick(rng) < functions;
            }
        }
        if (!function) {
            out.push_back(RandomTerminal(dims, rng));
            return;
        }
        auto op = RandomFunction(rng);
        out.push_back(Node::Function(op));
        for (int c = 0; c < Arity(op); ++c) {
            Grow(out, method, level + 1, depth, dims, rng, function_root);
        }
    }

    std::size_t RandomNode(const Tree& t, Rng& rng)
    {
        std::uniform_int_distribution<std::size_t> pick(0, t.Size() - 1);
        return pick(rng);
    }

} // namespace

Tree RandomTree(InitMethod method, int depth, std::size_t dims, Rng& rng, bool function_root)
{
    std::vector<Node> nodes;
    Grow(nodes, method, 0, depth, dims, rng, function_root);
    return Tree(std::move(nodes));
}

RampSlot RampedSlot(std::size_t i, const TreeShape& shape)
{
    auto span = static_cast<std::size_t>(shape.max_depth - shape.min_depth + 1);
    int depth = shape.min_depth + static_cast<int>((i / 2) % span);
    return { depth, i % 2 == 0 ? InitMethod::Full : InitMethod::Grow };
}

std::vector<Tree> RampedHalfAndHalf(std::size_t count, const TreeShape& shape, Rng& rng)
{
    std::vector<Tree> trees;
    trees.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto slot = RampedSlot(i, shape);
        Tree t;
        do {
            t = RandomTree(slot.method, slot.depth, shape.dims, rng);
        } while (t.Size() > kMaxTreeNodes);
        trees.push_back(std::move(t));
    }
    return trees;
}

Tree SpliceOrKeep(const Tree& parent, std::size_t at, std::span<const Node> donor)
{
    auto removed = parent.SubtreeEnd(at) - at;
    if (parent.Size() - removed + donor.size() > kMaxTreeNodes) {
        return parent;
    }
    return parent.Replace(at, donor);
}

Tree SubtreeCrossover(const Tree& a, const Tree& b, Rng& rng)
{
    auto at = RandomNode(a, rng);
    auto from = RandomNode(b, rng);
    auto nodes = b.Nodes();
    return SpliceOrKeep(a, at, nodes.subspan(from, b.SubtreeEnd(from) - from));
}

Tree SubtreeMutation(const Tree& a, std::size_t dims, Rng& rng)
{
    auto at = RandomNode(a, rng);
    std::uniform_int_distribution<int> depth(1, 3);
    auto donor = RandomTree(InitMethod::Grow, depth(rng), dims, rng, false);
    return SpliceOrKeep(a, at, donor.Nodes());
}

Tree OnePointMutation(const Tree& a, std::size_t dims, Rng& rng)
{
    auto at = RandomNode(a, rng);
    const auto& node = a[at];
    switch (Arity(node.op)) {
    case 2: {
        std::vector<Op> options;
        std::copy_if(kBinaryOps.begin(), kBinaryOps.end(), std::back_inserter(options), [&](Op op) { return op != node.op; });
        std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
        return a.WithNode(at, Node::Function(options[pick(rng)]));
    }
    case 1:
        return a.WithNode(at, Node::Function(node.op == Op::Cube ? Op::Log : Op::Cube));
    default:
        return a.WithNode(at, RandomTerminal(dims, rng));
    }
}

} // namespace steer
