// Acceptance run: one PASS/FAIL line per criterion, exit status = number of
// failed criteria. Takes about five minutes on one core; --only selects
// criteria by name.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "steer/active_loop.hpp"
#include "steer/report.hpp"
#include "steer/sim_user.hpp"

using namespace steer;
using steer::testing::RandomTestTree;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

// Live-session sweep shared by several criteria.
struct Sweep {
    std::vector<LiveResult> results;
    std::vector<std::size_t> buffered;
    std::vector<std::size_t> warmup_pairs;
};

const std::filesystem::path kData = STEER_DATA_DIR;
constexpr int kSweepSeeds = 30;

LiveConfig BostonSession(std::uint64_t seed)
{
    LiveConfig c;
    c.dataset = (kData / "boston.csv").string();
    c.seed = seed;
    return c;
}

const Sweep& SessionSweep()
{
    static const Sweep sweep = [] {
        Sweep s;
        for (int seed = 0; seed < kSweepSeeds; ++seed) {
            LiveRun run(BostonSession(static_cast<std::uint64_t>(seed)));
            s.results.push_back(run.RunWithOracle(OracleUser(ReferenceIndex::Size())));
            s.buffered.push_back(run.BufferedPairs());
            s.warmup_pairs.push_back(run.WarmupPairs());
        }
        return s;
    }();
    return sweep;
}

const std::vector<CurvePoint>& ToyPoints()
{
    static const auto points = RunToyExperiment(ToyConfig {});
    return points;
}

double MedianAt(const std::vector<CurveSummary>& summary, ToyMethod m, int feedback)
{
    for (const auto& s : summary) {
        if (s.method == m && s.feedback == feedback) {
            return s.median;
        }
    }
    throw Error(ErrorCode::Runtime, fmt::format("no {} curve point at {}", ToString(m), feedback));
}

Outcome Toy()
{
    const auto summary = SummarizeCurves(ToyPoints());
    int last = 0;
    for (const auto& s : summary) {
        last = std::max(last, s.feedback);
    }
    const auto u0 = MedianAt(summary, ToyMethod::RankingUncertainty, 0);
    const auto r0 = MedianAt(summary, ToyMethod::RankingRandom, 0);
    const auto c0 = MedianAt(summary, ToyMethod::Classic, 0);
    const auto u = MedianAt(summary, ToyMethod::RankingUncertainty, last);
    const auto r = MedianAt(summary, ToyMethod::RankingRandom, last);
    const auto c = MedianAt(summary, ToyMethod::Classic, last);
    const bool a = u0 < 1.0 && r0 < 1.0 && c0 < 1.0;
    const bool b = last >= 500 && u < r;
    const bool cc = u < c;
    return { a && b && cc,
        fmt::format("(a) start medians {:.3f}/{:.3f}/{:.3f} < 1 {}; (b) at {} answers uncertainty {:.4f} vs random {:.4f} {}; "
                    "(c) ranking {:.4f} vs classic {:.4f} {}",
            u0, r0, c0, a ? "ok" : "NO", last, u, r, b ? "ok" : "NO", u, c, cc ? "ok" : "NO") };
}

Outcome Footrule()
{
    std::vector<int> id(100);
    std::iota(id.begin(), id.end(), 1);
    auto rev = id;
    std::reverse(rev.begin(), rev.end());
    bool exact = SpearmanFootrule(id, id) == 0.0 && SpearmanFootrule(id, rev) == 1.5;
    for (int r : { 2, 3, 11 }) {
        std::vector<int> a(static_cast<std::size_t>(r));
        std::iota(a.begin(), a.end(), 1);
        auto b = a;
        std::reverse(b.begin(), b.end());
        exact = exact && SpearmanFootrule(a, b) == 1.5;
    }
    Rng rng(2024);
    double sum = 0.0;
    constexpr int samples = 100000;
    auto perm = id;
    for (int i = 0; i < samples; ++i) {
        std::shuffle(perm.begin(), perm.end(), rng);
        sum += SpearmanFootrule(id, perm);
    }
    const double mean = sum / samples;
    const bool mc = std::abs(mean - 1.0) <= 0.02;
    return { exact && mc, fmt::format("identical 0, reversed 1.5 {}; random-permutation mean {:.4f} (1.0 +- 0.02)", exact ? "ok" : "NO", mean) };
}

std::vector<FeatureVector> RandomFeatures(std::size_t n, Rng& rng)
{
    std::vector<FeatureVector> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(ExtractFeatures(RandomTestTree(13, rng)));
    }
    return out;
}

Outcome GradientCheck()
{
    Rng rng(77);
    double worst_ranking = 0.0, worst_classic = 0.0;
    int coords = 0, redrawn = 0;
    for (int rep = 0; rep < 3; ++rep) {
        auto net = Mlp::RankingNet(rng);
        auto fs = RandomFeatures(2, rng);
        LabeledPair pair { fs[0], fs[1], rep % 2 == 0 ? -1 : 1, PairSource::Oracle };
        auto loss = [&](const Mlp& n) { return PairLoss(n.Predict(EncodeFeatures(pair.first)), n.Predict(EncodeFeatures(pair.second)), pair.label); };
        auto check = testing::CheckGradient(net, PairLossGradient(net, pair, nullptr), loss, { EncodeFeatures(pair.first), EncodeFeatures(pair.second) },
            100, rng);
        worst_ranking = std::max(worst_ranking, check.worst_relative_error);
        coords += check.coordinates;
        redrawn += check.redrawn;

        auto classic = Mlp::ClassicNet(rng);
        const double target = 0.4 * rep - 0.3;
        auto x = EncodeFeatures(fs[0]);
        auto squared = [&](const Mlp& n) {
            const double e = n.Predict(x) - target;
            return e * e;
        };
        check = testing::CheckGradient(classic, SquaredErrorGradient(classic, fs[0], target, nullptr), squared, { x }, 100, rng);
        worst_classic = std::max(worst_classic, check.worst_relative_error);
        coords += check.coordinates;
        redrawn += check.redrawn;
    }
    const bool pass = coords == 600 && worst_ranking < 1e-3 && worst_classic < 1e-3;
    return { pass, fmt::format("worst relative error ranking {:.2e}, classic {:.2e} (< 1e-3) over {} coordinates, {} kink probes redrawn",
                       worst_ranking, worst_classic, coords, redrawn) };
}

Outcome BatchBand(const std::string& file, Task task, double lo, double hi, std::optional<std::pair<double, double>> size_band)
{
    BatchConfig c;
    c.dataset = kData / file;
    c.task = task;
    c.mode = EstimatorMode::Size;
    c.runs = 10;
    c.out_dir = std::filesystem::temp_directory_path() / fmt::format("steer-acceptance-{}", c.dataset.stem().string());
    std::filesystem::remove_all(c.out_dir);
    auto row = Aggregate(RunBatch(c));
    std::filesystem::remove_all(c.out_dir);
    const double test = row.test.front();
    bool pass = test >= lo && test <= hi;
    std::string detail = fmt::format("tau=0 mean test error {:.4g} in [{}, {}]", test, lo, hi);
    if (size_band) {
        const bool ok = row.mean_front_size >= size_band->first && row.mean_front_size <= size_band->second;
        pass = pass && ok;
        detail += fmt::format(", mean front size {:.1f} in [{}, {}]", row.mean_front_size, size_band->first, size_band->second);
    }
    return { pass, detail };
}

Outcome SortingOracle()
{
    Rng rng(91);
    std::uniform_int_distribution<int> coarse(0, 9);
    std::uniform_real_distribution<double> fine(0.0, 1.0);
    int agree = 0;
    for (int set = 0; set < 200; ++set) {
        std::vector<ObjectivePoint> pts(30);
        for (auto& p : pts) {
            p = set % 2 == 0 ? ObjectivePoint { double(coarse(rng)), double(coarse(rng)) } : ObjectivePoint { fine(rng), fine(rng) };
        }
        agree += NondominatedSort(pts) == testing::BruteForceRanks(pts);
    }
    return { agree == 200, fmt::format("{}/200 sets match the brute-force ranks", agree) };
}

Outcome Liveness()
{
    const auto& sweep = SessionSweep();
    int completed = 0;
    bool conserved = true;
    for (std::size_t i = 0; i < sweep.results.size(); ++i) {
        const auto& t = sweep.results[i].telemetry;
        completed += t.size() == 50 && !sweep.results[i].front.Empty();
        int sum = 0;
        for (std::size_t g = 0; g < t.size(); ++g) {
            sum += t[g].feedback;
            conserved = conserved && t[g].generation == static_cast<int>(g) + 1 && t[g].cumulative == sum && t[g].mispredictions <= t[g].feedback;
        }
        conserved = conserved && static_cast<std::size_t>(sum) == sweep.buffered[i] - sweep.warmup_pairs[i];
    }

    LiveRun idle(BostonSession(0));
    idle.Start();
    idle.Wait();
    auto quiet = idle.Result();
    const bool zero = idle.State() == RunState::Finished && quiet.telemetry.size() == 50 && !quiet.front.Empty()
        && std::all_of(quiet.telemetry.begin(), quiet.telemetry.end(), [](const auto& r) { return r.cumulative == 0; });

    auto again = LiveRun(BostonSession(0)).RunWithOracle(OracleUser(ReferenceIndex::Size()));
    const auto& first = sweep.results.front();
    const bool same = again.front == first.front && again.telemetry == first.telemetry && *again.estimator == *first.estimator;

    const bool pass = completed == kSweepSeeds && conserved && zero && same;
    return { pass, fmt::format("{}/{} oracle sessions reach generation 50; telemetry conservation {}; zero-feedback session {}; same-seed rerun {}",
                       completed, kSweepSeeds, conserved ? "holds" : "BROKEN", zero ? "completes" : "FAILED",
                       same ? "bit-identical" : "DIFFERS") };
}

Outcome UncertaintyDrop()
{
    const auto& sweep = SessionSweep();
    int below = 0;
    std::vector<double> finals;
    for (const auto& r : sweep.results) {
        finals.push_back(r.telemetry.back().normalized);
        below += finals.back() < 1.0;
    }
    return { below >= 25, fmt::format("{}/{} seeds end with normalized sigma < 1 (need >= 25); median final {:.3f}", below, kSweepSeeds,
                              Quantile(finals, 0.5)) };
}

Outcome Warmup()
{
    std::vector<int> epochs;
    for (const auto& r : SessionSweep().results) {
        epochs.push_back(r.warmup_epochs);
    }
    std::set<std::uint64_t> seen;
    for (const auto& p : ToyPoints()) {
        if (seen.insert(p.seed).second) {
            epochs.push_back(p.warmup_epochs);
        }
    }
    const int worst = *std::max_element(epochs.begin(), epochs.end());
    const auto typical = std::count_if(epochs.begin(), epochs.end(), [](int e) { return e >= 3 && e <= 6; });
    std::vector<double> as_double(epochs.begin(), epochs.end());
    return { worst <= 20, fmt::format("max {} epochs over {} warm-ups (<= 20); median {:.1f}, {} within 3-6 (informational)", worst,
                              epochs.size(), Quantile(as_double, 0.5), typical) };
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

Outcome ComparisonMatrix()
{
    Rng rng(55);
    auto models = DistinctModels(1000, rng);
    Rng r1(1), r2(2);
    std::vector<ScoreSource> sources { ReferenceIndex::Size(), ReferenceIndex::DefaultPhi(), std::make_shared<const Mlp>(Mlp::RankingNet(r1)),
        std::make_shared<const Mlp>(Mlp::RankingNet(r2)) };
    auto m = CompareEstimators(sources, models);
    bool props = true;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        props = props && m(i, i) == 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            props = props && m(i, j) == m(j, i) && m(i, j) >= 0.0 && m(i, j) <= 1.5;
        }
    }
    // one model per size, so the size ranking has no ties to break
    std::vector<RankedModel> by_size;
    std::set<int> sizes;
    for (const auto& mdl : models) {
        if (sizes.insert(mdl.features.size).second) {
            by_size.push_back(mdl);
        }
    }
    const double bigger_is_better[] = { 0, 1, 0, 0, 0, 0, 0 };
    const ScoreSource opposed[] = { ReferenceIndex::Size(), ReferenceIndex::Phi(bigger_is_better) };
    const double reversal = CompareEstimators(opposed, by_size)(0, 1);
    const bool pass = props && reversal == 1.5;
    return { pass, fmt::format("zero diagonal and symmetry over 4 sources {}; exact reversal on {} models gives {}", props ? "ok" : "NO",
                       by_size.size(), reversal) };
}

Outcome TwoSnapshots()
{
    Rng rng(5);
    auto models = DistinctModels(1000, rng);
    auto trained = [](std::uint64_t seed) {
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
    Rng r1(303), r2(404);
    const ScoreSource sources[] = { trained(101), trained(202), ReferenceIndex::Size(), std::make_shared<const Mlp>(Mlp::RankingNet(r1)),
        std::make_shared<const Mlp>(Mlp::RankingNet(r2)) };
    auto m = CompareEstimators(sources, models);
    const bool pass = m(0, 2) < m(3, 4) && m(1, 2) < m(3, 4);
    return { pass, fmt::format("trained snapshots vs size {:.3f}, {:.3f} < random vs random {:.3f}", m(0, 2), m(1, 2), m(3, 4)) };
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app { "Acceptance criteria" };
    std::vector<std::string> only;
    app.add_option("--only", only, "Run only the named criteria");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria {
        { "footrule-normalization", Footrule },
        { "gradient-check", GradientCheck },
        { "nsga2-sorting-oracle", SortingOracle },
        { "boston-size-band", [] { return BatchBand("boston.csv", Task::Regression, 18.0, 32.0, std::pair { 5.0, 14.0 }); } },
        { "german-size-band", [] { return BatchBand("german.csv", Task::BinaryClassification, 0.22, 0.33, std::nullopt); } },
        { "comparison-matrix", ComparisonMatrix },
        { "two-snapshot-ordering", TwoSnapshots },
        { "toy-experiment", Toy },
        { "live-loop-liveness", Liveness },
        { "uncertainty-drop", UncertaintyDrop },
        { "warmup-halting", Warmup },
    };

    int failed = 0;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = { false, fmt::format("threw: {}", e.what()) };
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !o.pass;
        std::cout << fmt::format("{} {:<24} {} [{:.0f}s]", o.pass ? "PASS" : "FAIL", name, o.detail, secs) << std::endl;
    }
    return failed;
}
