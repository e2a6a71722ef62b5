#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "steer/common.hpp"
#include "steer/individual.hpp"

namespace steer {

using ObjectivePoint = std::array<double, 2>;

// p dominates q: no worse in both objectives and strictly better in one.
bool Dominates(const ObjectivePoint& p, const ObjectivePoint& q);

// Fast non-dominated sorting. Rank 0 is the non-dominated set.
std::vector<int> NondominatedSort(std::span<const ObjectivePoint> points);

// Crowding distance of the points of one front. Extremes of every objective
// get +inf; an objective with zero range contributes nothing.
std::vector<double> CrowdingDistance(std::span<const ObjectivePoint> points);

ObjectivePoint ObjectivesOf(const Individual& ind);

// Binary tournament: non-duplicate beats duplicate, then lower rank, then
// higher crowding, then the first drawn. Returns the winner's index.
std::size_t TournamentSelect(std::span<const Individual> pop, Rng& rng);
bool TournamentPrefers(const Individual& a, const Individual& b);

// Assigns nsga_rank and crowding to every individual. Duplicates are ranked
// among themselves and placed after the worst non-duplicate rank.
void AssignRanksAndCrowding(std::span<Individual> pop);

// Indices of the `keep` survivors: whole fronts in rank order, the last
// partial front filled by descending crowding.
std::vector<std::size_t> SelectSurvivors(std::span<const Individual> pop, std::size_t keep);

} // namespace steer
