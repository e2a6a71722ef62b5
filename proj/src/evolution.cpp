#include "steer/evolution.hpp"

#include <algorithm>
#include <set>
#include <string>

#include <fmt/format.h>

#include "steer/nsga2.hpp"
#include "steer/scaling.hpp"
#include "steer/variation.hpp"

namespace steer {

Individual MakeIndividual(Tree tree, const Dataset& data, int generation)
{
    Individual ind;
    ind.predictions = Evaluate(tree, data.x_train);
    auto fit = LinearScale(ind.predictions, data.y_train);
    ind.mse_train = fit.mse;
    ind.scale_a = fit.intercept;
    ind.scale_b = fit.slope;
    ind.features = ExtractFeatures(tree);
    ind.birth_generation = generation;
    ind.tree = std::move(tree);
    return ind;
}

void ScorePopulation(std::span<Individual> pop, const Scorer& scorer, Rng& score_rng)
{
    std::vector<FeatureVector> fs;
    fs.reserve(pop.size());
    for (const auto& ind : pop) {
        fs.push_back(ind.features);
    }
    std::vector<Score> scores;
    try {
        scores = scorer.ScoreAll(fs, score_rng);
    } catch (const std::exception& ex) {
        throw Error(ErrorCode::Runtime, fmt::format("interpretability scorer failed: {}", ex.what()));
    }
    if (scores.size() != pop.size()) {
        throw Error(ErrorCode::Runtime, "interpretability scorer returned the wrong number of scores");
    }
    for (std::size_t i = 0; i < pop.size(); ++i) {
        pop[i].psi_hat = scores[i].psi;
        pop[i].psi_sigma = scores[i].sigma;
    }
}

std::vector<Individual> InitialPopulation(const EvolutionConfig& config, const Dataset& data, const Scorer& scorer, Rng& rng,
    Rng& score_rng)
{
    TreeShape shape { data.Dims(), config.init_min_depth, config.init_max_depth };
    std::vector<Individual> pop;
    pop.reserve(config.pop_size);
    for (auto& tree : RampedHalfAndHalf(config.pop_size, shape, rng)) {
        pop.push_back(MakeIndividual(std::move(tree), data, 0));
    }
    ScorePopulation(pop, scorer, score_rng);
    MarkSemanticDuplicates(pop, rng);
    AssignRanksAndCrowding(pop);
    return pop;
}

std::vector<Individual> EvolveGeneration(std::span<const Individual> pop, const Dataset& data, const Scorer& scorer, int generation,
    Rng& rng, Rng& score_rng)
{
    const auto dims = data.Dims();
    std::vector<Individual> merged(pop.begin(), pop.end());
    merged.reserve(pop.size() * 2);

    std::uniform_int_distribution<int> which(0, 2);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const auto& parent = pop[TournamentSelect(pop, rng)];
        Tree child;
        switch (which(rng)) {
        case 0: {
            const auto& donor = pop[TournamentSelect(pop, rng)];
            child = SubtreeCrossover(parent.tree, donor.tree, rng);
            break;
        }
        case 1:
            child = SubtreeMutation(parent.tree, dims, rng);
            break;
        default:
            child = OnePointMutation(parent.tree, dims, rng);
            break;
        }
        merged.push_back(MakeIndividual(std::move(child), data, generation));
    }

    ScorePopulation(merged, scorer, score_rng);
    MarkSemanticDuplicates(merged, rng);
    AssignRanksAndCrowding(merged);

    std::vector<Individual> next;
    next.reserve(pop.size());
    for (auto i : SelectSurvivors(merged, pop.size())) {
        next.push_back(std::move(merged[i]));
    }
    return next;
}

TradeoffFront ExtractFront(std::span<const Individual> pop, const Dataset& data)
{
    if (pop.empty()) {
        throw Error(ErrorCode::Runtime, "cannot extract a front from an empty population");
    }
    std::vector<const Individual*> candidates;
    for (const auto& ind : pop) {
        if (!ind.is_duplicate) {
            candidates.push_back(&ind);
        }
    }
    if (candidates.empty()) {
        for (const auto& ind : pop) {
            candidates.push_back(&ind);
        }
    }
    std::vector<ObjectivePoint> points;
    for (const auto* c : candidates) {
        points.push_back(ObjectivesOf(*c));
    }
    auto ranks = NondominatedSort(points);
    std::vector<const Individual*> best;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (ranks[i] == 0) {
            best.push_back(candidates[i]);
        }
    }
    std::stable_sort(best.begin(), best.end(), [](const Individual* a, const Individual* b) {
        if (a->mse_train != b->mse_train) {
            return a->mse_train < b->mse_train;
        }
        return a->psi_hat > b->psi_hat;
    });

    TradeoffFront front;
    std::set<std::string> seen;
    for (const auto* ind : best) {
        auto expr = ToInfix(ind->tree);
        if (!seen.insert(expr).second) {
            continue;
        }
        LinearFit fit { ind->scale_a, ind->scale_b, ind->mse_train };
        FrontEntry e;
        e.expression = std::move(expr);
        e.mse_train = ind->mse_train;
        e.train_error = ErrorMetric(data.task, ApplyScale(fit, ind->predictions), data.y_train);
        e.test_error = ErrorMetric(data.task, ApplyScale(fit, Evaluate(ind->tree, data.x_test)), data.y_test);
        e.psi_hat = ind->psi_hat;
        e.features = ind->features;
        e.generation = ind->birth_generation;
        front.entries.push_back(std::move(e));
    }
    return front;
}

Evolution::Evolution(EvolutionConfig config, const Dataset& data, Rng rng)
    : config_(config)
    , data_(data)
    , rng_(std::move(rng))
{
}

void Evolution::Initialize(const Scorer& scorer, Rng& score_rng)
{
    population_ = InitialPopulation(config_, data_, scorer, rng_, score_rng);
    generation_ = 0;
}

void Evolution::Step(const Scorer& scorer, Rng& score_rng)
{
    if (population_.empty()) {
        throw Error(ErrorCode::Runtime, "evolution stepped before initialization");
    }
    ++generation_;
    population_ = EvolveGeneration(population_, data_, scorer, generation_, rng_, score_rng);
}

TradeoffFront RunEvolution(const EvolutionConfig& config, const Dataset& data, const Scorer& scorer, std::uint64_t seed)
{
    Evolution evo(config, data, SplitRng(seed, 1));
    auto score_rng = SplitRng(seed, 2);
    evo.Initialize(scorer, score_rng);
    while (!evo.Finished()) {
        evo.Step(scorer, score_rng);
    }
    return evo.Front();
}

} // namespace steer
