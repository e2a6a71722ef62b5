#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "steer/common.hpp"
#include "steer/dataset.hpp"
#include "steer/estimator.hpp"
#include "steer/front.hpp"
#include "steer/individual.hpp"

namespace steer {

struct EvolutionConfig {
    std::size_t pop_size = 256;
    int generations = 50;
    int init_min_depth = 1;
    int init_max_depth = 3;
};

// Evaluates the tree on the training rows and fits linear scaling.
Individual MakeIndividual(Tree tree, const Dataset& data, int generation = 0);

// Fills psi_hat/psi_sigma from the scorer. Scorer failures surface as
// Error(Runtime).
void ScorePopulation(std::span<Individual> pop, const Scorer& scorer, Rng& score_rng);

// Ramped half-and-half population, evaluated, scored, ranked.
std::vector<Individual> InitialPopulation(const EvolutionConfig& config, const Dataset& data, const Scorer& scorer, Rng& rng,
    Rng& score_rng);

// One (mu + lambda) NSGA-II generation: pop_size offspring by binary
// tournament and one of crossover / subtree mutation / one-point mutation
// (1/3 each), parents and offspring rescored with `scorer`, duplicates
// re-marked and demoted, truncation back to pop_size.
std::vector<Individual> EvolveGeneration(std::span<const Individual> pop, const Dataset& data, const Scorer& scorer, int generation,
    Rng& rng, Rng& score_rng);

// Rank-0 non-duplicates, deduplicated by canonical string, ordered by
// ascending training error. Throws on an empty population.
TradeoffFront ExtractFront(std::span<const Individual> pop, const Dataset& data);

// Stepwise driver over the functions above.
class Evolution {
public:
    Evolution(EvolutionConfig config, const Dataset& data, Rng rng);

    void Initialize(const Scorer& scorer, Rng& score_rng);
    void Step(const Scorer& scorer, Rng& score_rng);
    bool Finished() const { return generation_ >= config_.generations; }
    int Generation() const { return generation_; }
    const std::vector<Individual>& Population() const { return population_; }
    TradeoffFront Front() const { return ExtractFront(population_, data_); }
    const EvolutionConfig& Config() const { return config_; }

private:
    EvolutionConfig config_;
    const Dataset& data_;
    Rng rng_;
    int generation_ = 0;
    std::vector<Individual> population_;
};

// Convenience: full run with a fixed scorer.
TradeoffFront RunEvolution(const EvolutionConfig& config, const Dataset& data, const Scorer& scorer, std::uint64_t seed);

} // namespace steer
