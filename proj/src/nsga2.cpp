#include "steer/nsga2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace steer {

bool Dominates(const ObjectivePoint& p, const ObjectivePoint& q)
{
    bool strictly = false;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] > q[k]) {
            return false;
        }
        strictly = strictly || p[k] < q[k];
    }
    return strictly;
}

std::vector<int> NondominatedSort(std::span<const ObjectivePoint> points)
{
    const auto n = points.size();
    std::vector<int> rank(n, 0);
    std::vector<int> dominated_by(n, 0);
    std::vector<std::vector<std::size_t>> dominates(n);
    std::vector<std::size_t> current;

    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (p == q) {
                continue;
            }
            if (Dominates(points[p], points[q])) {
                dominates[p].push_back(q);
            } else if (Dominates(points[q], points[p])) {
                ++dominated_by[p];
            }
        }
        if (dominated_by[p] == 0) {
            current.push_back(p);
        }
    }

    int front = 0;
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (auto p : current) {
            rank[p] = front;
            for (auto q : dominates[p]) {
                if (--dominated_by[q] == 0) {
                    next.push_back(q);
                }
            }
        }
        current = std::move(next);
        ++front;
    }
    return rank;
}

std::vector<double> CrowdingDistance(std::span<const ObjectivePoint> points)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    const auto n = points.size();
    std::vector<double> distance(n, 0.0);
    if (n <= 2) {
        std::fill(distance.begin(), distance.end(), inf);
        return distance;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < 2; ++k) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return points[a][k] < points[b][k]; });
        const double lo = points[order.front()][k];
        const double hi = points[order.back()][k];
        distance[order.front()] = inf;
        distance[order.back()] = inf;
        const double range = hi - lo;
        if (!(range > 0.0) || !std::isfinite(range)) {
            continue;
        }
        for (std::size_t i = 1; i + 1 < n; ++i) {
            distance[order[i]] += (points[order[i + 1]][k] - points[order[i - 1]][k]) / range;
        }
    }
    return distance;
}

ObjectivePoint ObjectivesOf(const Individual& ind)
{
    return { ind.Objective(0), ind.Objective(1) };
}

bool TournamentPrefers(const Individual& a, const Individual& b)
{
    if (a.is_duplicate != b.is_duplicate) {
        return !a.is_duplicate;
    }
    if (a.nsga_rank != b.nsga_rank) {
        return a.nsga_rank < b.nsga_rank;
    }
    if (a.crowding != b.crowding) {
        return a.crowding > b.crowding;
    }
    return true;
}

std::size_t TournamentSelect(std::span<const Individual> pop, Rng& rng)
{
    std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
    auto first = pick(rng);
    auto second = pick(rng);
    return TournamentPrefers(pop[first], pop[second]) ? first : second;
}

namespace {

    // Ranks a subset (given by index) among itself, offset by `base`.
    int RankSubset(std::span<Individual> pop, const std::vector<std::size_t>& subset, int base)
    {
        std::vector<ObjectivePoint> points;
        points.reserve(subset.size());
        for (auto i : subset) {
            points.push_back(ObjectivesOf(pop[i]));
        }
        auto ranks = NondominatedSort(points);
        int worst = base - 1;
        for (std::size_t j = 0; j < subset.size(); ++j) {
            pop[subset[j]].nsga_rank = base + ranks[j];
            worst = std::max(worst, base + ranks[j]);
        }
        return worst;
    }

} // namespace

void AssignRanksAndCrowding(std::span<Individual> pop)
{
    std::vector<std::size_t> unique;
    std::vector<std::size_t> duplicates;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        (pop[i].is_duplicate ? duplicates : unique).push_back(i);
    }
    int worst = RankSubset(pop, unique, 0);
    RankSubset(pop, duplicates, worst + 1);

    int max_rank = 0;
    for (const auto& ind : pop) {
        max_rank = std::max(max_rank, ind.nsga_rank);
    }
    std::vector<std::vector<std::size_t>> fronts(static_cast<std::size_t>(max_rank) + 1);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        fronts[static_cast<std::size_t>(pop[i].nsga_rank)].push_back(i);
    }
    for (const auto& front : fronts) {
        std::vector<ObjectivePoint> points;
        for (auto i : front) {
            points.push_back(ObjectivesOf(pop[i]));
        }
        auto distance = CrowdingDistance(points);
        for (std::size_t j = 0; j < front.size(); ++j) {
            pop[front[j]].crowding = distance[j];
        }
    }
}

std::vector<std::size_t> SelectSurvivors(std::span<const Individual> pop, std::size_t keep)
{
    std::vector<std::size_t> order(pop.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        if (pop[a].nsga_rank != pop[b].nsga_rank) {
            return pop[a].nsga_rank < pop[b].nsga_rank;
        }
        return pop[a].crowding > pop[b].crowding;
    });
    order.resize(std::min(keep, order.size()));
    return order;
}

} // namespace steer
