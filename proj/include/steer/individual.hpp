#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "steer/common.hpp"
#include "steer/expr.hpp"

namespace steer {

struct Individual {
    Tree tree;
    FeatureVector features;
    Eigen::ArrayXd predictions; // raw outputs on the training rows

    double mse_train = std::numeric_limits<double>::infinity();
    double psi_hat = 0.0;   // estimated interpretability, higher is better
    double psi_sigma = 0.0; // estimator uncertainty
    double scale_a = 0.0;   // linear scaling intercept
    double scale_b = 0.0;   // linear scaling slope

    bool is_duplicate = false;
    int nsga_rank = 0;
    double crowding = 0.0;
    int birth_generation = 0;

    // Both objectives are minimized.
    double Objective(std::size_t k) const { return k == 0 ? mse_train : -psi_hat; }
};

inline constexpr double kDuplicateTolerance = 1e-12;

// True when both prediction vectors agree elementwise within
// kDuplicateTolerance (scaled by magnitude above 1).
bool SameBehavior(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b);

// Visits the population in a random order; every later individual behaving
// identically to an unflagged representative is flagged. Representatives stay
// unflagged. Returns the number of flagged individuals.
std::size_t MarkSemanticDuplicates(std::span<Individual> pop, Rng& rng);

} // namespace steer
