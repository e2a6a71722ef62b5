#include "steer/individual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace steer {

bool SameBehavior(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b)
{
    if (a.size() != b.size()) {
        return false;
    }
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double scale = std::max({ 1.0, std::abs(a[i]), std::abs(b[i]) });
        if (std::abs(a[i] - b[i]) > kDuplicateTolerance * scale) {
            return false;
        }
    }
    return true;
}

std::size_t MarkSemanticDuplicates(std::span<Individual> pop, Rng& rng)
{
    std::vector<std::size_t> order(pop.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    for (auto& ind : pop) {
        ind.is_duplicate = false;
    }
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto& p = pop[order[i]];
        if (p.is_duplicate) {
            continue;
        }
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            auto& q = pop[order[j]];
            if (!q.is_duplicate && SameBehavior(p.predictions, q.predictions)) {
                q.is_duplicate = true;
                ++flagged;
            }
        }
    }
    return flagged;
}

} // namespace steer
