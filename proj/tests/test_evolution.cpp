#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "steer/evolution.hpp"
#include "steer/nsga2.hpp"

using namespace steer;
using steer::testing::BruteForceRanks;

namespace {

Dataset IdentityDataset(std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Table table;
    table.features.resize(60, 3);
    table.labels.resize(60);
    for (int i = 0; i < 60; ++i) {
        for (int j = 0; j < 3; ++j) {
            table.features(i, j) = n(rng);
        }
        table.labels(i) = table.features(i, 0);
    }
    return MakeDataset(table, Task::Regression, seed, "identity");
}

} // namespace

TEST_CASE("non-dominated sorting examples")
{
    std::vector<ObjectivePoint> pts { { 1, 2 }, { 2, 1 }, { 2, 2 } };
    CHECK(NondominatedSort(pts) == std::vector<int> { 0, 0, 1 });
    std::vector<ObjectivePoint> same(5, ObjectivePoint { 3, 3 });
    CHECK(NondominatedSort(same) == std::vector<int>(5, 0));
}

TEST_CASE("non-dominated sorting matches the brute-force oracle")
{
    Rng rng(31);
    std::uniform_int_distribution<int> coarse(0, 9);
    std::uniform_real_distribution<double> fine(0.0, 1.0);
    for (int set = 0; set < 200; ++set) {
        std::vector<ObjectivePoint> pts(30);
        for (auto& p : pts) {
            // half of the sets use a coarse grid to force ties
            p = set % 2 == 0 ? ObjectivePoint { double(coarse(rng)), double(coarse(rng)) } : ObjectivePoint { fine(rng), fine(rng) };
        }
        CHECK(NondominatedSort(pts) == BruteForceRanks(pts));
    }
}

TEST_CASE("crowding distance")
{
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<ObjectivePoint> two { { 0, 1 }, { 1, 0 } };
    CHECK(CrowdingDistance(two) == std::vector<double> { inf, inf });

    std::vector<ObjectivePoint> three { { 0, 2 }, { 1, 1 }, { 2, 0 } };
    auto d = CrowdingDistance(three);
    CHECK(d[0] == inf);
    CHECK(d[2] == inf);
    // (2 - 0) / 2 for each objective
    CHECK(d[1] == doctest::Approx(2.0));

    std::vector<ObjectivePoint> flat { { 0, 5 }, { 1, 5 }, { 3, 5 }, { 4, 5 } };
    d = CrowdingDistance(flat);
    for (double v : d) {
        CHECK_FALSE(std::isnan(v));
    }
    CHECK(d[1] == doctest::Approx(3.0 / 4.0));
    CHECK(d[2] == doctest::Approx(3.0 / 4.0));
}

TEST_CASE("tournament preferences")
{
    Individual dup, plain;
    dup.is_duplicate = true;
    dup.nsga_rank = 0;
    plain.nsga_rank = 7;
    CHECK(TournamentPrefers(plain, dup));
    CHECK_FALSE(TournamentPrefers(dup, plain));

    Individual r0, r1;
    r0.nsga_rank = 0;
    r1.nsga_rank = 1;
    CHECK(TournamentPrefers(r0, r1));
    CHECK_FALSE(TournamentPrefers(r1, r0));

    Individual wide, narrow;
    wide.crowding = std::numeric_limits<double>::infinity();
    narrow.crowding = 0.3;
    CHECK(TournamentPrefers(wide, narrow));
    CHECK_FALSE(TournamentPrefers(narrow, wide));

    // full tie: the first drawn wins
    CHECK(TournamentPrefers(narrow, narrow));
}

TEST_CASE("duplicates are ranked behind every non-duplicate and dropped first")
{
    std::vector<Individual> pop(6);
    const double objectives[6][2] = { { 1, -5 }, { 2, -4 }, { 3, -3 }, { 9, -1 }, { 0.5, -9 }, { 0.1, -10 } };
    for (int i = 0; i < 6; ++i) {
        pop[i].mse_train = objectives[i][0];
        pop[i].psi_hat = -objectives[i][1];
    }
    pop[4].is_duplicate = true;
    pop[5].is_duplicate = true;
    AssignRanksAndCrowding(pop);
    int worst = 0;
    for (int i = 0; i < 4; ++i) {
        worst = std::max(worst, pop[i].nsga_rank);
    }
    CHECK(pop[4].nsga_rank > worst);
    CHECK(pop[5].nsga_rank > worst);
    CHECK(pop[5].nsga_rank < pop[4].nsga_rank);

    auto kept = SelectSurvivors(pop, 4);
    std::set<std::size_t> s(kept.begin(), kept.end());
    CHECK(s == std::set<std::size_t> { 0, 1, 2, 3 });
}

TEST_CASE("evolution reaches x0 when y = x0")
{
    auto data = IdentityDataset(3);
    ReferenceScorer scorer(ReferenceIndex::Size());
    EvolutionConfig config;
    config.pop_size = 64;
    config.generations = 15;
    auto front = RunEvolution(config, data, scorer, 5);
    REQUIRE_FALSE(front.Empty());
    bool found = false;
    for (const auto& e : front.entries) {
        if (e.features.size == 1 && e.mse_train < 1e-20) {
            found = true;
        }
    }
    CHECK(found);
    // with an exact size-1 solution the whole front collapses to it
    CHECK(front.Size() == 1);
    CHECK(front.entries[0].expression == "x0");
}

TEST_CASE("population size is preserved and seeded runs are reproducible")
{
    auto data = IdentityDataset(4);
    data.y_train = data.y_train.sin() + data.x_train.col(1).array().square();
    ReferenceScorer scorer(ReferenceIndex::DefaultPhi());
    EvolutionConfig config;
    config.pop_size = 40;
    config.generations = 6;

    Evolution evo(config, data, SplitRng(9, 1));
    auto score_rng = SplitRng(9, 2);
    evo.Initialize(scorer, score_rng);
    CHECK(evo.Population().size() == 40);
    while (!evo.Finished()) {
        evo.Step(scorer, score_rng);
        CHECK(evo.Population().size() == 40);
    }
    CHECK(evo.Generation() == 6);

    auto a = RunEvolution(config, data, scorer, 17);
    auto b = RunEvolution(config, data, scorer, 17);
    CHECK(a == b);
}

TEST_CASE("extracted fronts are non-dominated, unique and ordered")
{
    auto data = IdentityDataset(6);
    data.y_train = (data.x_train.col(0).array() * data.x_train.col(1).array()).exp().min(20.0);
    data.y_test = (data.x_test.col(0).array() * data.x_test.col(1).array()).exp().min(20.0);
    for (auto index : { ReferenceIndex::Size(), ReferenceIndex::DefaultPhi() }) {
        ReferenceScorer scorer(index);
        EvolutionConfig config;
        config.pop_size = 64;
        config.generations = 10;
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            auto front = RunEvolution(config, data, scorer, seed);
            REQUIRE_FALSE(front.Empty());
            std::set<std::string> names;
            for (std::size_t i = 0; i < front.Size(); ++i) {
                const auto& a = front.entries[i];
                CHECK(names.insert(a.expression).second);
                CHECK(a.psi_hat == doctest::Approx(index.Score(a.features)));
                CHECK(a.train_error == doctest::Approx(a.mse_train));
                for (std::size_t j = 0; j < front.Size(); ++j) {
                    const auto& b = front.entries[j];
                    bool dominates = a.mse_train <= b.mse_train && a.psi_hat >= b.psi_hat
                        && (a.mse_train < b.mse_train || a.psi_hat > b.psi_hat);
                    CHECK_FALSE(dominates);
                }
                if (i > 0) {
                    // more accurate entries are never more interpretable
                    CHECK(front.entries[i - 1].mse_train <= a.mse_train);
                    CHECK(front.entries[i - 1].psi_hat <= a.psi_hat);
                }
            }
        }
    }
}

TEST_CASE("front of a single individual")
{
    auto data = IdentityDataset(2);
    std::vector<Individual> pop { MakeIndividual(ParseInfix("(x1 * 2.00)"), data) };
    auto front = ExtractFront(pop, data);
    REQUIRE(front.Size() == 1);
    CHECK(front.entries[0].expression == "(x1 * 2.00)");
    CHECK_THROWS_AS(ExtractFront(std::span<const Individual> {}, data), Error);
}

TEST_CASE("scorer failures abort the generation with a runtime error")
{
    struct Failing final : Scorer {
        std::vector<Score> ScoreAll(std::span<const FeatureVector>, Rng&) const override { throw std::runtime_error("boom"); }
        bool Deterministic() const override { return true; }
    };
    auto data = IdentityDataset(1);
    EvolutionConfig config;
    config.pop_size = 8;
    Rng rng(1), score_rng(2);
    try {
        InitialPopulation(config, data, Failing {}, rng, score_rng);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.Code() == ErrorCode::Runtime);
    }
}
