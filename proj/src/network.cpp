#include "steer/network.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace steer {

namespace {

    constexpr std::array kEstimatorWidths { 6, 100, 100, 100, 1 };
    constexpr double kEstimatorDropout = 0.25;
    constexpr std::string_view kCheckpointFormat = "steer.mlp";
    constexpr int kCheckpointVersion = 1;

    // Inverted-dropout keep mask, already scaled by 1 / (1 - rate).
    template <typename Derived>
    void FillMask(Eigen::DenseBase<Derived>& mask, double rate, Rng& rng)
    {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double keep_scale = 1.0 / (1.0 - rate);
        for (Eigen::Index j = 0; j < mask.cols(); ++j) {
            for (Eigen::Index i = 0; i < mask.rows(); ++i) {
                mask(i, j) = u(rng) < rate ? 0.0 : keep_scale;
            }
        }
    }

} // namespace

void Gradients::SetZero()
{
    for (auto& w : weights) {
        w.setZero();
    }
    for (auto& b : bias) {
        b.setZero();
    }
}

Gradients& Gradients::operator+=(const Gradients& other)
{
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += other.weights[l];
        bias[l] += other.bias[l];
    }
    return *this;
}

Mlp::Mlp(std::span<const int> widths, OutputHead head, double dropout_rate, Rng& rng)
    : head_(head)
    , dropout_rate_(dropout_rate)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int fan_in = widths[l];
        const int fan_out = widths[l + 1];
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        DenseLayer layer;
        layer.weights.resize(fan_out, fan_in);
        for (Eigen::Index j = 0; j < fan_in; ++j) {
            for (Eigen::Index i = 0; i < fan_out; ++i) {
                layer.weights(i, j) = limit * u(rng);
            }
        }
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layers_.push_back(std::move(layer));
    }
}

Mlp Mlp::RankingNet(Rng& rng)
{
    return Mlp(kEstimatorWidths, OutputHead::Tanh, kEstimatorDropout, rng);
}

Mlp Mlp::ClassicNet(Rng& rng)
{
    return Mlp(kEstimatorWidths, OutputHead::Linear, kEstimatorDropout, rng);
}

std::size_t Mlp::ParameterCount() const
{
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    }
    return n;
}

Eigen::RowVectorXd Mlp::Predict(const Eigen::MatrixXd& inputs) const
{
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        a = ((layers_[l].weights * a).colwise() + layers_[l].bias).cwiseMax(0.0);
    }
    Eigen::RowVectorXd out = (layers_.back().weights * a).colwise() + layers_.back().bias;
    if (head_ == OutputHead::Tanh) {
        out = out.array().tanh();
    }
    return out;
}

double Mlp::Predict(const Eigen::VectorXd& input) const
{
    return Predict(Eigen::MatrixXd(input))(0);
}

Eigen::MatrixXd Mlp::Sample(const Eigen::MatrixXd& inputs, int passes, Rng& rng) const
{
    const auto n = inputs.cols();
    Eigen::MatrixXd a = inputs.replicate(1, passes);
    Eigen::MatrixXd mask;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        a = ((layers_[l].weights * a).colwise() + layers_[l].bias).cwiseMax(0.0);
        if (dropout_rate_ > 0.0) {
            mask.resize(a.rows(), a.cols());
            FillMask(mask, dropout_rate_, rng);
            a.array() *= mask.array();
        }
    }
    Eigen::RowVectorXd out = (layers_.back().weights * a).colwise() + layers_.back().bias;
    if (head_ == OutputHead::Tanh) {
        out = out.array().tanh();
    }
    Eigen::MatrixXd result(passes, n);
    for (int p = 0; p < passes; ++p) {
        result.row(p) = out.segment(p * n, n);
    }
    return result;
}

double Mlp::Forward(const Eigen::VectorXd& input, Rng* rng, Tape& tape) const
{
    const bool dropout = rng != nullptr && dropout_rate_ > 0.0;
    tape.activations.assign(1, input);
    tape.preactivations.clear();
    tape.masks.clear();
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        Eigen::VectorXd z = layers_[l].weights * tape.activations.back() + layers_[l].bias;
        Eigen::VectorXd h = z.cwiseMax(0.0);
        if (dropout) {
            Eigen::VectorXd mask(h.size());
            FillMask(mask, dropout_rate_, *rng);
            h.array() *= mask.array();
            tape.masks.push_back(std::move(mask));
        }
        tape.preactivations.push_back(std::move(z));
        tape.activations.push_back(std::move(h));
    }
    double z = layers_.back().weights.row(0).dot(tape.activations.back()) + layers_.back().bias(0);
    tape.output = head_ == OutputHead::Tanh ? std::tanh(z) : z;
    return tape.output;
}

void Mlp::Backward(const Tape& tape, double dloss_doutput, Gradients& grads) const
{
    const auto last = layers_.size() - 1;
    double dz = dloss_doutput;
    if (head_ == OutputHead::Tanh) {
        dz *= 1.0 - tape.output * tape.output;
    }
    grads.weights[last].row(0) += dz * tape.activations[last].transpose();
    grads.bias[last](0) += dz;
    Eigen::VectorXd da = dz * layers_[last].weights.row(0).transpose();

    for (std::size_t l = last; l-- > 0;) {
        Eigen::VectorXd delta = da;
        if (!tape.masks.empty()) {
            delta.array() *= tape.masks[l].array();
        }
        delta.array() *= (tape.preactivations[l].array() > 0.0).cast<double>();
        grads.weights[l].noalias() += delta * tape.activations[l].transpose();
        grads.bias[l] += delta;
        if (l > 0) {
            da.noalias() = layers_[l].weights.transpose() * delta;
        }
    }
}

Gradients Mlp::ZeroGradients() const
{
    Gradients g;
    for (const auto& layer : layers_) {
        g.weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
        g.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    }
    return g;
}

nlohmann::json Mlp::ToJson() const
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : layers_) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) {
                w.push_back(layer.weights(i, j));
            }
        }
        layers.push_back({
            { "rows", layer.weights.rows() },
            { "cols", layer.weights.cols() },
            { "weights", w },
            { "bias", std::vector<double>(layer.bias.begin(), layer.bias.end()) },
        });
    }
    return {
        { "format", kCheckpointFormat },
        { "format_version", kCheckpointVersion },
        { "head", head_ == OutputHead::Tanh ? "tanh" : "linear" },
        { "dropout", dropout_rate_ },
        { "weight_version", version_ },
        { "layers", layers },
    };
}

Mlp Mlp::FromJson(const nlohmann::json& j)
{
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat || j.at("format_version").get<int>() != kCheckpointVersion) {
            throw Error(ErrorCode::Data, "unsupported estimator checkpoint format");
        }
        Mlp net;
        auto head = j.at("head").get<std::string>();
        if (head != "tanh" && head != "linear") {
            throw Error(ErrorCode::Data, fmt::format("unknown output head '{}'", head));
        }
        net.head_ = head == "tanh" ? OutputHead::Tanh : OutputHead::Linear;
        net.dropout_rate_ = j.at("dropout").get<double>();
        net.version_ = j.at("weight_version").get<std::uint64_t>();
        Eigen::Index expected_in = -1;
        for (const auto& lj : j.at("layers")) {
            auto rows = lj.at("rows").get<Eigen::Index>();
            auto cols = lj.at("cols").get<Eigen::Index>();
            auto w = lj.at("weights").get<std::vector<double>>();
            auto b = lj.at("bias").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows
                || (expected_in >= 0 && cols != expected_in)) {
                throw Error(ErrorCode::Data, "estimator checkpoint has inconsistent layer shapes");
            }
            DenseLayer layer;
            layer.weights.resize(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                for (Eigen::Index c = 0; c < cols; ++c) {
                    layer.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
                }
            }
            layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
            expected_in = rows;
            net.layers_.push_back(std::move(layer));
        }
        if (net.layers_.empty() || expected_in != 1) {
            throw Error(ErrorCode::Data, "estimator checkpoint must end in a scalar layer");
        }
        return net;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::Data, fmt::format("malformed estimator checkpoint: {}", ex.what()));
    }
}

void Mlp::Save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Runtime, fmt::format("cannot write '{}'", path.string()));
    }
    out << ToJson().dump() << '\n';
}

Mlp Mlp::Load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Data, fmt::format("cannot read estimator checkpoint '{}'", path.string()));
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::Data, fmt::format("malformed estimator checkpoint: {}", ex.what()));
    }
    return FromJson(j);
}

bool operator==(const Mlp& a, const Mlp& b)
{
    if (a.head_ != b.head_ || a.dropout_rate_ != b.dropout_rate_ || a.version_ != b.version_ || a.layers_.size() != b.layers_.size()) {
        return false;
    }
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
        if (a.layers_[l].weights != b.layers_[l].weights || a.layers_[l].bias != b.layers_[l].bias) {
            return false;
        }
    }
    return true;
}

SgdMomentum::SgdMomentum(const Mlp& net, double learning_rate, double momentum)
    : learning_rate_(learning_rate)
    , momentum_(momentum)
    , velocity_(net.ZeroGradients())
{
}

void SgdMomentum::Step(Mlp& net, const Gradients& grads)
{
    auto& layers = net.Layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        velocity_.weights[l] = momentum_ * velocity_.weights[l] - learning_rate_ * grads.weights[l];
        velocity_.bias[l] = momentum_ * velocity_.bias[l] - learning_rate_ * grads.bias[l];
        layers[l].weights += velocity_.weights[l];
        layers[l].bias += velocity_.bias[l];
    }
    net.SetVersion(net.Version() + 1);
}

} // namespace steer
