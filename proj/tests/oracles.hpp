#pragma once

// Reference implementations used as test oracles. Written independently of
// the library code they check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "steer/estimator.hpp"
#include "steer/nsga2.hpp"

namespace steer::testing {

// Rank = index of the peeling layer in which the point becomes non-dominated.
inline std::vector<int> BruteForceRanks(const std::vector<ObjectivePoint>& pts)
{
    auto dominates = [](const ObjectivePoint& p, const ObjectivePoint& q) {
        return p[0] <= q[0] && p[1] <= q[1] && (p[0] < q[0] || p[1] < q[1]);
    };
    std::vector<int> rank(pts.size(), -1);
    std::size_t done = 0;
    for (int level = 0; done < pts.size(); ++level) {
        std::vector<std::size_t> layer;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (rank[i] >= 0) {
                continue;
            }
            bool dominated = false;
            for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
                dominated = rank[j] < 0 && j != i && dominates(pts[j], pts[i]);
            }
            if (!dominated) {
                layer.push_back(i);
            }
        }
        for (auto i : layer) {
            rank[i] = level;
        }
        done += layer.size();
    }
    return rank;
}

// Footrule straight from the definition, given rank positions (1..r).
inline double FootruleByDefinition(const std::vector<int>& r, const std::vector<int>& s)
{
    const double n = static_cast<double>(r.size());
    const double q = r.size() % 2 == 0 ? n * n : n * n - 1;
    double sum = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        sum += std::abs(r[i] - s[i]);
    }
    return 3.0 / q * sum;
}

struct GradientCheckResult {
    double worst_relative_error = 0.0;
    int coordinates = 0;
    int redrawn = 0; // probes discarded because a ReLU changed state
};

// On/off state of every hidden unit for each probe input.
inline std::vector<bool> ActivationPattern(const Mlp& net, const std::vector<Eigen::VectorXd>& inputs)
{
    std::vector<bool> pattern;
    Mlp::Tape tape;
    for (const auto& x : inputs) {
        net.Forward(x, nullptr, tape);
        for (const auto& z : tape.preactivations) {
            for (Eigen::Index i = 0; i < z.size(); ++i) {
                pattern.push_back(z(i) > 0.0);
            }
        }
    }
    return pattern;
}

enum class Coordinates { Weights, Biases };

// Central differences (step h) on `coords` random weight or bias entries of
// `net`, against the analytic gradient `grad`. `loss` evaluates the loss
// deterministically for the current parameters. A central difference across
// a ReLU kink does not estimate the derivative, so probes whose +h or -h
// evaluation flips a hidden unit on `inputs` are redrawn.
template <typename LossFn>
GradientCheckResult CheckGradient(Mlp net, const Gradients& grad, LossFn loss, const std::vector<Eigen::VectorXd>& inputs, int coords,
    Rng& rng, double h = 1e-4, Coordinates which = Coordinates::Weights)
{
    GradientCheckResult result;
    const auto base = ActivationPattern(net, inputs);
    auto& layers = net.Layers();
    std::uniform_int_distribution<std::size_t> pick_layer(0, layers.size() - 1);
    while (result.coordinates < coords) {
        auto l = pick_layer(rng);
        double* param;
        double analytic;
        if (which == Coordinates::Biases) {
            std::uniform_int_distribution<Eigen::Index> i(0, layers[l].bias.size() - 1);
            auto k = i(rng);
            param = &layers[l].bias(k);
            analytic = grad.bias[l](k);
        } else {
            std::uniform_int_distribution<Eigen::Index> r(0, layers[l].weights.rows() - 1);
            std::uniform_int_distribution<Eigen::Index> col(0, layers[l].weights.cols() - 1);
            auto a = r(rng);
            auto b = col(rng);
            param = &layers[l].weights(a, b);
            analytic = grad.weights[l](a, b);
        }
        const double saved = *param;
        *param = saved + h;
        const double up = loss(net);
        const bool up_same = ActivationPattern(net, inputs) == base;
        *param = saved - h;
        const double down = loss(net);
        const bool down_same = ActivationPattern(net, inputs) == base;
        *param = saved;
        if (!up_same || !down_same) {
            ++result.redrawn;
            if (result.redrawn > 10 * coords) {
                break;
            }
            continue;
        }
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max({ std::abs(analytic), std::abs(numeric), 1e-7 });
        result.worst_relative_error = std::max(result.worst_relative_error, std::abs(analytic - numeric) / scale);
        ++result.coordinates;
    }
    return result;
}

} // namespace steer::testing
