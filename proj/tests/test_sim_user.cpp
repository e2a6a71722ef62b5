#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "steer/sim_user.hpp"

using namespace steer;
using steer::testing::FootruleByDefinition;
using steer::testing::RandomTestTree;

namespace {

std::vector<int> Identity(int r)
{
    std::vector<int> v(static_cast<std::size_t>(r));
    std::iota(v.begin(), v.end(), 1);
    return v;
}

std::vector<RankedModel> DistinctModels(std::size_t n, Rng& rng)
{
    std::vector<RankedModel> out;
    std::set<std::string> keys;
    while (out.size() < n) {
        auto t = RandomTestTree(13, rng);
        auto key = ToInfix(t);
        if (keys.insert(key).second) {
            out.push_back(RankedModel { key, ExtractFeatures(t) });
        }
    }
    return out;
}

double FootruleAgainst(const ScoreSource& a, const ScoreSource& b, const std::vector<RankedModel>& models)
{
    const ScoreSource both[] = { a, b };
    return CompareEstimators(both, models)(0, 1);
}

} // namespace

TEST_CASE("footrule normalization")
{
    for (int r : { 2, 3, 10, 11, 100 }) {
        auto id = Identity(r);
        CHECK(SpearmanFootrule(id, id) == 0.0);
        auto rev = id;
        std::reverse(rev.begin(), rev.end());
        CHECK(SpearmanFootrule(id, rev) == 1.5);
    }
    // r = 2: (3 / 4) * (1 + 1)
    const int a[] = { 1, 2 };
    const int b[] = { 2, 1 };
    CHECK(SpearmanFootrule(a, b) == 0.75 * 2.0);
}

TEST_CASE("footrule matches the definition and its bounds")
{
    Rng rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        int r = 2 + static_cast<int>(rng() % 40);
        auto x = Identity(r);
        auto y = Identity(r);
        std::shuffle(x.begin(), x.end(), rng);
        std::shuffle(y.begin(), y.end(), rng);
        double f = SpearmanFootrule(x, y);
        CHECK(f == doctest::Approx(FootruleByDefinition(x, y)).epsilon(1e-12));
        CHECK(f == SpearmanFootrule(y, x));
        CHECK(f >= 0.0);
        CHECK(f <= 1.5);
        CHECK((f == 0.0) == (x == y));
    }
}

TEST_CASE("random permutations have footrule close to 1")
{
    Rng rng(2);
    auto base = Identity(100);
    auto perm = base;
    double sum = 0.0;
    const int samples = 100000;
    for (int i = 0; i < samples; ++i) {
        std::shuffle(perm.begin(), perm.end(), rng);
        sum += SpearmanFootrule(base, perm);
    }
    CHECK(std::abs(sum / samples - 1.0) < 0.02);
}

TEST_CASE("footrule rejects mismatched model sets")
{
    const int a[] = { 1, 2, 3 };
    const int b[] = { 1, 2 };
    const int c[] = { 1, 1, 2 };
    CHECK_THROWS_AS(SpearmanFootrule(a, b), Error);
    CHECK_THROWS_AS(SpearmanFootrule(a, c), Error);
    auto r = RankByScore({ "x0", "x1" }, std::vector<double> { 1, 2 });
    auto s = RankByScore({ "x0", "x2" }, std::vector<double> { 1, 2 });
    CHECK_THROWS_AS(SpearmanFootrule(r, s), Error);
}

TEST_CASE("rankings order by score then key")
{
    auto r = RankByScore({ "b", "a", "c" }, std::vector<double> { 1.0, 1.0, 5.0 });
    CHECK(r.positions == std::vector<int> { 3, 2, 1 });
    auto s = RankByScore({ "c", "b", "a" }, std::vector<double> { 5.0, 1.0, 1.0 });
    CHECK(SpearmanFootrule(r, s) == 0.0);
}

TEST_CASE("oracle answers")
{
    Rng rng(3);
    OracleUser ell(ReferenceIndex::Size());
    FeatureVector size3 { 3, 1, 0, 0, 0, 2 };
    FeatureVector size7 { 7, 3, 1, 1, 1, 2 };
    CHECK(ell.Answer(size3, size7, rng) == Choice::Left);
    CHECK(ell.Answer(size7, size3, rng) == Choice::Right);
    CHECK(ell.Answer(size3, size3, rng) == Choice::Left);

    OracleUser flipped(ReferenceIndex::Size(), 1.0);
    for (int i = 0; i < 50; ++i) {
        CHECK(flipped.Answer(size3, size7, rng) == Choice::Right);
    }

    OracleUser noisy(ReferenceIndex::Size(), 0.3);
    int flips = 0;
    for (int i = 0; i < 4000; ++i) {
        flips += noisy.Answer(size3, size7, rng) == Choice::Right ? 1 : 0;
    }
    CHECK(flips / 4000.0 == doctest::Approx(0.3).epsilon(0.1));
    CHECK_THROWS_AS(OracleUser(ReferenceIndex::Size(), 1.5), Error);

    CHECK(LabelFor(Choice::Left) == -1);
    CHECK(ParseChoice("right") == Choice::Right);
    CHECK_THROWS_AS(ParseChoice("up"), Error);
}

TEST_CASE("estimator comparison matrix")
{
    Rng rng(4);
    auto models = DistinctModels(300, rng);
    // distinct sizes so that reversing the size index reverses the ranking exactly
    std::vector<RankedModel> by_size;
    std::set<int> sizes;
    for (const auto& m : models) {
        if (sizes.insert(m.features.size).second) {
            by_size.push_back(m);
        }
    }
    REQUIRE(by_size.size() >= 5);
    const double neg_size[] = { 0, 1, 0, 0, 0, 0, 0 };
    std::vector<ScoreSource> sources { ReferenceIndex::Size(), ReferenceIndex::Phi(neg_size), ReferenceIndex::DefaultPhi(),
        std::make_shared<const Mlp>(Mlp::RankingNet(rng)) };
    auto m = CompareEstimators(sources, by_size);
    CHECK(m(0, 1) == 1.5);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        CHECK(m(i, i) == 0.0);
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            CHECK(m(i, j) == m(j, i));
            CHECK(m(i, j) >= 0.0);
            CHECK(m(i, j) <= 1.5);
        }
    }
    std::vector<ScoreSource> one { ReferenceIndex::Size() };
    CHECK_THROWS_AS(CompareEstimators(one, by_size), Error);
}

TEST_CASE("size-trained snapshots agree with size more than two random nets agree with each other")
{
    Rng rng(5);
    auto models = DistinctModels(1000, rng);
    auto train_snapshot = [&](std::uint64_t seed) {
        Rng local(seed);
        auto est = Estimator::Ranking(local);
        auto ell = ReferenceIndex::Size();
        std::vector<LabeledPair> pairs;
        for (int i = 0; i < 500; ++i) {
            auto a = ExtractFeatures(RandomTestTree(13, local));
            auto b = ExtractFeatures(RandomTestTree(13, local));
            pairs.push_back(LabeledPair { a, b, ReferenceLabel(ell, a, b), PairSource::Oracle });
        }
        for (int epoch = 0; epoch < 3; ++epoch) {
            TrainEpoch(est, pairs, local);
        }
        return std::make_shared<const Mlp>(est.Net());
    };
    ScoreSource first = train_snapshot(101);
    ScoreSource second = train_snapshot(202);
    ScoreSource ell = ReferenceIndex::Size();
    Rng r1(303), r2(404);
    ScoreSource random_a = std::make_shared<const Mlp>(Mlp::RankingNet(r1));
    ScoreSource random_b = std::make_shared<const Mlp>(Mlp::RankingNet(r2));
    const double random_pair = FootruleAgainst(random_a, random_b, models);
    const double first_vs_ell = FootruleAgainst(first, ell, models);
    const double second_vs_ell = FootruleAgainst(second, ell, models);
    MESSAGE("trained vs size: " << first_vs_ell << ", " << second_vs_ell << "; random vs random: " << random_pair);
    CHECK(first_vs_ell < random_pair);
    CHECK(second_vs_ell < random_pair);
}

TEST_CASE("size warm-up on 100 random trees ranks held-out models better than chance")
{
    Rng rng(6);
    auto held_out = DistinctModels(1000, rng);
    std::vector<FeatureVector> warm;
    for (int i = 0; i < 100; ++i) {
        warm.push_back(ExtractFeatures(RandomTestTree(13, rng)));
    }
    auto est = Estimator::Ranking(rng);
    auto result = WarmupRanking(est, ReferenceIndex::Size(), warm, rng);
    double f = FootruleAgainst(std::make_shared<const Mlp>(est.Net()), ReferenceIndex::Size(), held_out);
    MESSAGE("post warm-up footrule " << f << " after " << result.epochs << " epochs");
    CHECK(f < 1.0);
}

TEST_CASE("500 size-labelled pairs improve on the warm-up ranking in most seeds")
{
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(1000 + seed);
        auto held_out = DistinctModels(1000, rng);
        std::vector<FeatureVector> warm;
        for (int i = 0; i < 100; ++i) {
            warm.push_back(ExtractFeatures(RandomTestTree(13, rng)));
        }
        auto est = Estimator::Ranking(rng);
        auto ell = ReferenceIndex::Size();
        WarmupRanking(est, ell, warm, rng);
        const double before = FootruleAgainst(std::make_shared<const Mlp>(est.Net()), ell, held_out);
        OracleUser oracle(ell);
        for (int i = 0; i < 500; ++i) {
            auto a = ExtractFeatures(RandomTestTree(13, rng));
            auto b = ExtractFeatures(RandomTestTree(13, rng));
            est.TrainOnPair(LabeledPair { a, b, LabelFor(oracle.Answer(a, b, rng)), PairSource::Oracle }, rng);
        }
        const double after = FootruleAgainst(std::make_shared<const Mlp>(est.Net()), ell, held_out);
        improved += after < before ? 1 : 0;
    }
    MESSAGE("improved in " << improved << " of 30 seeds");
    CHECK(improved >= 25);
}

TEST_CASE("toy repetition produces aligned curves")
{
    ToyConfig config;
    config.pool_models = 200;
    config.test_models = 200;
    config.max_answers = 100;
    config.seeds = 2;
    auto points = RunToyExperiment(config);
    auto summary = SummarizeCurves(points);
    // 3 methods x 5 checkpoints (0, 25, 50, 75, 100)
    CHECK(summary.size() == 15);
    for (const auto& s : summary) {
        CHECK(s.n == 2);
        CHECK(s.q1 <= s.median);
        CHECK(s.median <= s.q3);
        CHECK(s.feedback % 25 == 0);
    }
    auto again = RunToyRepetition(config, config.base_seed);
    std::vector<CurvePoint> first(points.begin(), points.begin() + static_cast<std::ptrdiff_t>(again.size()));
    REQUIRE(first.size() == again.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
        CHECK(first[i].footrule == again[i].footrule);
    }
}

TEST_CASE("quantiles")
{
    CHECK(Quantile({ 3, 1, 2 }, 0.5) == 2.0);
    CHECK(Quantile({ 1, 2, 3, 4 }, 0.5) == 2.5);
    CHECK(Quantile({ 1, 2, 3, 4, 5 }, 0.25) == 2.0);
}
