#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "steer/common.hpp"

namespace steer {

enum class OutputHead { Tanh, Linear };

struct DenseLayer {
    Eigen::MatrixXd weights; // out x in
    Eigen::VectorXd bias;
};

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias;

    void SetZero();
    Gradients& operator+=(const Gradients& other);
};

// Fully connected network with ReLU hidden layers, inverted dropout after
// each hidden layer, and a tanh or linear scalar head.
class Mlp {
public:
    Mlp() = default;
    // Glorot-uniform weights, zero biases.
    Mlp(std::span<const int> widths, OutputHead head, double dropout_rate, Rng& rng);

    static Mlp RankingNet(Rng& rng);
    static Mlp ClassicNet(Rng& rng);

    OutputHead Head() const { return head_; }
    double DropoutRate() const { return dropout_rate_; }
    void SetDropoutRate(double rate) { dropout_rate_ = rate; }
    std::uint64_t Version() const { return version_; }
    void SetVersion(std::uint64_t v) { version_ = v; }
    std::size_t InputWidth() const { return static_cast<std::size_t>(layers_.front().weights.cols()); }

    std::vector<DenseLayer>& Layers() { return layers_; }
    const std::vector<DenseLayer>& Layers() const { return layers_; }
    std::size_t ParameterCount() const;

    // Deterministic pass (dropout off). Inputs are columns (in x N).
    Eigen::RowVectorXd Predict(const Eigen::MatrixXd& inputs) const;
    double Predict(const Eigen::VectorXd& input) const;

    // `passes` stochastic passes with dropout active; result is passes x N.
    Eigen::MatrixXd Sample(const Eigen::MatrixXd& inputs, int passes, Rng& rng) const;

    struct Tape {
        std::vector<Eigen::VectorXd> activations; // input, then each hidden output after dropout
        std::vector<Eigen::VectorXd> preactivations; // hidden layers only
        std::vector<Eigen::VectorXd> masks; // scaled keep masks (empty when dropout is off)
        double output = 0.0;
    };

    // Single-sample pass recording what Backward needs. A null rng disables
    // dropout.
    double Forward(const Eigen::VectorXd& input, Rng* rng, Tape& tape) const;
    // Accumulates d(loss)/d(params) into grads given d(loss)/d(output).
    void Backward(const Tape& tape, double dloss_doutput, Gradients& grads) const;

    Gradients ZeroGradients() const;

    nlohmann::json ToJson() const;
    static Mlp FromJson(const nlohmann::json& j);
    void Save(const std::filesystem::path& path) const;
    static Mlp Load(const std::filesystem::path& path);

    friend bool operator==(const Mlp& a, const Mlp& b);

private:
    std::vector<DenseLayer> layers_;
    OutputHead head_ = OutputHead::Tanh;
    double dropout_rate_ = 0.0;
    std::uint64_t version_ = 0;
};

// velocity = momentum * velocity - lr * grad; params += velocity
class SgdMomentum {
public:
    SgdMomentum() = default;
    SgdMomentum(const Mlp& net, double learning_rate, double momentum);

    void Step(Mlp& net, const Gradients& grads);
    double LearningRate() const { return learning_rate_; }

private:
    double learning_rate_ = 0.001;
    double momentum_ = 0.9;
    Gradients velocity_;
};

} // namespace steer
