#include "steer/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "steer/common.hpp"

namespace steer {

double ConstantFromGrid(int index)
{
    return -5.0 + kConstStep * index;
}

bool IsOnConstantGrid(double value)
{
    if (!(value >= -5.0 && value <= 5.0)) {
        return false;
    }
    double steps = (value + 5.0) / kConstStep;
    return std::abs(steps - std::round(steps)) < 1e-9;
}

Tree::Tree(std::vector<Node> prefix)
    : nodes_(std::move(prefix))
{
}

std::size_t Tree::SubtreeEnd(std::size_t i) const
{
    int need = 1;
    std::size_t j = i;
    while (need > 0) {
        if (j >= nodes_.size()) {
            throw Error(ErrorCode::Structural, "truncated prefix sequence");
        }
        need += Arity(nodes_[j].op) - 1;
        ++j;
    }
    return j;
}

int Tree::Depth() const
{
    // depth of a lone leaf is 0
    int depth = 0;
    std::vector<int> stack;
    for (const auto& n : nodes_) {
        int d = stack.empty() ? 0 : stack.back();
        if (!stack.empty()) {
            stack.pop_back();
        }
        depth = std::max(depth, d);
        for (int k = 0; k < Arity(n.op); ++k) {
            stack.push_back(d + 1);
        }
    }
    return depth;
}

Tree Tree::Replace(std::size_t at, std::span<const Node> donor) const
{
    auto end = SubtreeEnd(at);
    std::vector<Node> out;
    out.reserve(nodes_.size() - (end - at) + donor.size());
    out.insert(out.end(), nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(at));
    out.insert(out.end(), donor.begin(), donor.end());
    out.insert(out.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(end), nodes_.end());
    return Tree(std::move(out));
}

Tree Tree::WithNode(std::size_t at, Node node) const
{
    auto copy = nodes_;
    copy.at(at) = node;
    return Tree(std::move(copy));
}

void Tree::Validate(std::size_t dims) const
{
    if (nodes_.empty()) {
        throw Error(ErrorCode::Structural, "empty tree");
    }
    if (SubtreeEnd(0) != nodes_.size()) {
        throw Error(ErrorCode::Structural, "prefix sequence has trailing nodes");
    }
    for (const auto& n : nodes_) {
        if (n.op == Op::Var && dims > 0 && n.var >= dims) {
            throw Error(ErrorCode::Structural, fmt::format("variable x{} out of range for {} features", n.var, dims));
        }
        if (n.op == Op::Const && !IsOnConstantGrid(n.value)) {
            throw Error(ErrorCode::Structural, fmt::format("constant {} is not on the 0.25 grid", n.value));
        }
    }
}

namespace {

    std::size_t FormatAt(const Tree& tree, std::size_t i, std::string& out)
    {
        const auto& n = tree[i];
        switch (n.op) {
        case Op::Var:
            out += fmt::format("x{}", n.var);
            return i + 1;
        case Op::Const:
            out += fmt::format("{:.2f}", n.value);
            return i + 1;
        case Op::Max: {
            out += "max(";
            auto j = FormatAt(tree, i + 1, out);
            out += ", ";
            j = FormatAt(tree, j, out);
            out += ')';
            return j;
        }
        case Op::Log: {
            out += "log(";
            auto j = FormatAt(tree, i + 1, out);
            out += ')';
            return j;
        }
        case Op::Cube: {
            out += '(';
            auto j = FormatAt(tree, i + 1, out);
            out += "^3)";
            return j;
        }
        default: {
            static constexpr std::string_view symbols[] = { " + ", " - ", " * ", " / " };
            out += '(';
            auto j = FormatAt(tree, i + 1, out);
            out += symbols[static_cast<int>(n.op)];
            j = FormatAt(tree, j, out);
            out += ')';
            return j;
        }
        }
    }

    class InfixParser {
    public:
        explicit InfixParser(std::string_view text)
            : text_(text)
        {
        }

        Tree Parse()
        {
            ParseExpr();
            SkipSpace();
            if (pos_ != text_.size()) {
                Fail("unexpected trailing input");
            }
            Tree tree(std::move(nodes_));
            tree.Validate();
            return tree;
        }

    private:
        [[noreturn]] void Fail(std::string_view what) const
        {
            throw Error(ErrorCode::Structural, fmt::format("cannot parse expression at offset {}: {}", pos_, what));
        }

        void SkipSpace()
        {
            while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
                ++pos_;
            }
        }

        bool Consume(std::string_view token)
        {
            SkipSpace();
            if (text_.substr(pos_, token.size()) == token) {
                pos_ += token.size();
                return true;
            }
            return false;
        }

        void Expect(std::string_view token)
        {
            if (!Consume(token)) {
                Fail(fmt::format("expected '{}'", token));
            }
        }

        void ParseExpr()
        {
            SkipSpace();
            if (pos_ >= text_.size()) {
                Fail("unexpected end of input");
            }
            if (Consume("max(")) {
                nodes_.push_back(Node::Function(Op::Max));
                ParseExpr();
                Expect(",");
                ParseExpr();
                Expect(")");
                return;
            }
            if (Consume("log(")) {
                nodes_.push_back(Node::Function(Op::Log));
                ParseExpr();
                Expect(")");
                return;
            }
            if (Consume("(")) {
                auto slot = nodes_.size();
                nodes_.push_back(Node::Function(Op::Add));
                ParseExpr();
                if (Consume("^3")) {
                    nodes_[slot].op = Op::Cube;
                    Expect(")");
                    return;
                }
                SkipSpace();
                if (pos_ >= text_.size()) {
                    Fail("unexpected end of input");
                }
                switch (text_[pos_]) {
                case '+':
                    nodes_[slot].op = Op::Add;
                    break;
                case '-':
                    nodes_[slot].op = Op::Sub;
                    break;
                case '*':
                    nodes_[slot].op = Op::Mul;
                    break;
                case '/':
                    nodes_[slot].op = Op::Div;
                    break;
                default:
                    Fail("expected binary operator");
                }
                ++pos_;
                ParseExpr();
                Expect(")");
                return;
            }
            if (text_[pos_] == 'x') {
                ++pos_;
                unsigned index = 0;
                auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), index);
                if (ec != std::errc {} || index > 0xffff) {
                    Fail("bad variable index");
                }
                pos_ = static_cast<std::size_t>(ptr - text_.data());
                nodes_.push_back(Node::Variable(static_cast<std::uint16_t>(index)));
                return;
            }
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
            if (ec != std::errc {}) {
                Fail("expected operand");
            }
            pos_ = static_cast<std::size_t>(ptr - text_.data());
            nodes_.push_back(Node::Constant(value));
        }

        std::string_view text_;
        std::size_t pos_ = 0;
        std::vector<Node> nodes_;
    };

} // namespace

std::string ToInfix(const Tree& tree)
{
    std::string out;
    if (!tree.Empty()) {
        FormatAt(tree, 0, out);
    }
    return out;
}

Tree ParseInfix(std::string_view text)
{
    return InfixParser(text).Parse();
}

double ProtectedDiv(double a, double b)
{
    double sign = b < 0.0 ? -1.0 : 1.0;
    return a * sign / std::max(std::abs(b), 1e-6);
}

double ProtectedLog(double x)
{
    return x == 0.0 ? 0.0 : std::log(std::abs(x));
}

Eigen::ArrayXd Evaluate(const Tree& tree, const Eigen::MatrixXd& X)
{
    const auto rows = X.rows();
    auto nodes = tree.Nodes();
    std::vector<Eigen::ArrayXd> stack;
    stack.reserve(nodes.size());

    auto clamp = [](Eigen::ArrayXd a) -> Eigen::ArrayXd { return a.min(kValueClamp).max(-kValueClamp); };

    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        const auto& n = *it;
        switch (n.op) {
        case Op::Var:
            if (n.var >= X.cols()) {
                throw Error(ErrorCode::Structural, fmt::format("variable x{} out of range for {} features", n.var, X.cols()));
            }
            stack.push_back(clamp(X.col(n.var).array()));
            break;
        case Op::Const:
            stack.push_back(Eigen::ArrayXd::Constant(rows, n.value));
            break;
        case Op::Cube:
            stack.back() = clamp(stack.back().cube());
            break;
        case Op::Log:
            stack.back() = stack.back().unaryExpr([](double v) { return ProtectedLog(v); });
            break;
        default: {
            auto lhs = std::move(stack.back());
            stack.pop_back();
            auto& rhs = stack.back();
            switch (n.op) {
            case Op::Add:
                rhs = clamp(lhs + rhs);
                break;
            case Op::Sub:
                rhs = clamp(lhs - rhs);
                break;
            case Op::Mul:
                rhs = clamp(lhs * rhs);
                break;
            case Op::Div:
                rhs = clamp(lhs.binaryExpr(rhs, [](double a, double b) { return ProtectedDiv(a, b); }));
                break;
            case Op::Max:
                rhs = lhs.max(rhs);
                break;
            default:
                break;
            }
        }
        }
    }
    if (stack.size() != 1) {
        throw Error(ErrorCode::Structural, "malformed tree");
    }
    return std::move(stack.back());
}

FeatureVector ExtractFeatures(const Tree& tree)
{
    FeatureVector f;
    auto nodes = tree.Nodes();
    f.size = static_cast<int>(nodes.size());
    std::set<std::uint16_t> dims;
    for (const auto& n : nodes) {
        if (IsFunction(n.op)) {
            ++f.n_ops;
            f.n_nonarith += IsNonArithmetic(n.op) ? 1 : 0;
        } else if (n.op == Op::Const) {
            ++f.n_consts;
        } else {
            dims.insert(n.var);
        }
    }
    f.n_dims = static_cast<int>(dims.size());

    // run[i]: length of the unbroken non-arithmetic chain starting at node i
    // and descending towards the leaves; computed children-first.
    std::vector<int> run(nodes.size(), 0);
    std::vector<int> stack;
    for (std::size_t k = nodes.size(); k-- > 0;) {
        const auto& n = nodes[k];
        int best = 0;
        for (int c = 0; c < Arity(n.op); ++c) {
            best = std::max(best, stack.back());
            stack.pop_back();
        }
        run[k] = IsNonArithmetic(n.op) ? best + 1 : 0;
        stack.push_back(run[k]);
        f.max_chain = std::max(f.max_chain, run[k]);
    }
    return f;
}

} // namespace steer
