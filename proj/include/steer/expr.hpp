#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace steer {

inline constexpr std::size_t kMaxTreeNodes = 25;

enum class Op : std::uint8_t {
    Add,
    Sub,
    Mul,
    Div, // protected
    Cube,
    Log, // protected
    Max,
    Var,
    Const,
};

inline constexpr std::array kFunctionOps { Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Cube, Op::Log, Op::Max };
inline constexpr std::array kBinaryOps { Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Max };
inline constexpr std::array kUnaryOps { Op::Cube, Op::Log };

constexpr int Arity(Op op)
{
    switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Max:
        return 2;
    case Op::Cube:
    case Op::Log:
        return 1;
    default:
        return 0;
    }
}

constexpr bool IsFunction(Op op) { return Arity(op) > 0; }
constexpr bool IsArithmetic(Op op) { return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div; }
constexpr bool IsNonArithmetic(Op op) { return op == Op::Cube || op == Op::Log || op == Op::Max; }

// Constants live on the grid -5.00, -4.75, ..., +5.00.
inline constexpr double kConstStep = 0.25;
inline constexpr int kConstGridSize = 41;
double ConstantFromGrid(int index);
bool IsOnConstantGrid(double value);

struct Node {
    Op op = Op::Const;
    std::uint16_t var = 0;
    double value = 0.0;

    static Node Function(Op op) { return Node { op, 0, 0.0 }; }
    static Node Variable(std::uint16_t index) { return Node { Op::Var, index, 0.0 }; }
    static Node Constant(double v) { return Node { Op::Const, 0, v }; }

    friend bool operator==(const Node&, const Node&) = default;
};

// Expression tree stored as a prefix-ordered node sequence. A subtree rooted at
// position i occupies the contiguous range [i, SubtreeEnd(i)).
class Tree {
public:
    Tree() = default;
    explicit Tree(std::vector<Node> prefix);

    std::span<const Node> Nodes() const { return nodes_; }
    std::size_t Size() const { return nodes_.size(); }
    bool Empty() const { return nodes_.empty(); }
    const Node& operator[](std::size_t i) const { return nodes_[i]; }

    std::size_t SubtreeEnd(std::size_t i) const;
    int Depth() const;

    // New tree with the subtree at `at` replaced by `donor`.
    Tree Replace(std::size_t at, std::span<const Node> donor) const;
    Tree WithNode(std::size_t at, Node node) const;

    // Throws Error(Structural) on arity mismatches, off-grid constants, or
    // variable indices >= dims (when dims > 0).
    void Validate(std::size_t dims = 0) const;

    friend bool operator==(const Tree&, const Tree&) = default;

private:
    std::vector<Node> nodes_;
};

// Fully parenthesized canonical infix form, e.g. "(max(2.50, x1) + x2)".
std::string ToInfix(const Tree& tree);
// Inverse of ToInfix. Throws Error(Structural) on malformed input.
Tree ParseInfix(std::string_view text);

// Protected primitives.
double ProtectedDiv(double a, double b);
double ProtectedLog(double x);
// Every node output is clamped to +-kValueClamp so that compositions stay finite.
inline constexpr double kValueClamp = 1e30;

// Evaluates the tree on each row of X (n x d). Throws Error(Structural) if a
// variable index is out of range.
Eigen::ArrayXd Evaluate(const Tree& tree, const Eigen::MatrixXd& X);

struct FeatureVector {
    int size = 0;
    int n_ops = 0;
    int n_nonarith = 0;
    int max_chain = 0;
    int n_consts = 0;
    int n_dims = 0;

    static constexpr std::size_t kCount = 6;
    std::array<double, kCount> AsArray() const
    {
        return { double(size), double(n_ops), double(n_nonarith), double(max_chain), double(n_consts), double(n_dims) };
    }

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
    friend auto operator<=>(const FeatureVector&, const FeatureVector&) = default;
};

FeatureVector ExtractFeatures(const Tree& tree);

} // namespace steer
