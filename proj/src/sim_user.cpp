#include "steer/sim_user.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "steer/variation.hpp"

namespace steer {

std::string_view ToString(Choice c)
{
    return c == Choice::Left ? "left" : "right";
}

Choice ParseChoice(std::string_view s)
{
    if (s == "left") {
        return Choice::Left;
    }
    if (s == "right") {
        return Choice::Right;
    }
    throw Error(ErrorCode::InvalidConfig, fmt::format("choice must be 'left' or 'right', got '{}'", s));
}

double DeterministicScore(const ScoreSource& source, const FeatureVector& f)
{
    if (const auto* ref = std::get_if<ReferenceIndex>(&source)) {
        return ref->Score(f);
    }
    return std::get<std::shared_ptr<const Mlp>>(source)->Predict(EncodeFeatures(f));
}

std::vector<double> DeterministicScores(const ScoreSource& source, std::span<const FeatureVector> fs)
{
    std::vector<double> out(fs.size());
    if (const auto* ref = std::get_if<ReferenceIndex>(&source)) {
        for (std::size_t i = 0; i < fs.size(); ++i) {
            out[i] = ref->Score(fs[i]);
        }
        return out;
    }
    if (fs.empty()) {
        return out;
    }
    auto pred = std::get<std::shared_ptr<const Mlp>>(source)->Predict(EncodeFeatures(fs));
    for (std::size_t i = 0; i < fs.size(); ++i) {
        out[i] = pred(static_cast<Eigen::Index>(i));
    }
    return out;
}

ScoreSource ParseScoreSource(std::string_view text)
{
    constexpr std::string_view prefix = "snapshot:";
    if (text.starts_with(prefix)) {
        return std::make_shared<const Mlp>(Mlp::Load(std::string(text.substr(prefix.size()))));
    }
    return ReferenceIndex::Parse(text);
}

OracleUser::OracleUser(ScoreSource target, double noise_p)
    : target_(std::move(target))
    , noise_p_(noise_p)
{
    if (!(noise_p >= 0.0 && noise_p <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("noise_p must lie in [0, 1], got {}", noise_p));
    }
}

Choice OracleUser::Answer(const FeatureVector& left, const FeatureVector& right, Rng& rng) const
{
    auto choice = DeterministicScore(target_, left) >= DeterministicScore(target_, right) ? Choice::Left : Choice::Right;
    if (noise_p_ > 0.0 && std::bernoulli_distribution(noise_p_)(rng)) {
        choice = choice == Choice::Left ? Choice::Right : Choice::Left;
    }
    return choice;
}

Ranking RankByScore(std::vector<std::string> keys, std::span<const double> scores)
{
    if (keys.size() != scores.size()) {
        throw Error(ErrorCode::InvalidConfig, "ranking needs one score per model");
    }
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return keys[a] < keys[b];
    });
    Ranking r;
    r.positions.resize(keys.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        r.positions[order[pos]] = static_cast<int>(pos) + 1;
    }
    r.keys = std::move(keys);
    return r;
}

namespace {

    bool IsPermutation(std::span<const int> r)
    {
        std::vector<bool> seen(r.size() + 1, false);
        for (int v : r) {
            if (v < 1 || v > static_cast<int>(r.size()) || seen[static_cast<std::size_t>(v)]) {
                return false;
            }
            seen[static_cast<std::size_t>(v)] = true;
        }
        return true;
    }

} // namespace

double SpearmanFootrule(std::span<const int> r, std::span<const int> s)
{
    if (r.size() != s.size() || r.size() < 2 || !IsPermutation(r) || !IsPermutation(s)) {
        throw Error(ErrorCode::InvalidConfig, "footrule needs two rankings of the same model set with at least 2 models");
    }
    const auto n = static_cast<long long>(r.size());
    const long long q = n % 2 == 0 ? n * n : n * n - 1;
    long long sum = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        sum += std::llabs(static_cast<long long>(r[i]) - s[i]);
    }
    return 3.0 * static_cast<double>(sum) / static_cast<double>(q);
}

double SpearmanFootrule(const Ranking& r, const Ranking& s)
{
    if (r.keys.size() != s.keys.size()) {
        throw Error(ErrorCode::InvalidConfig, "rankings cover different model sets");
    }
    std::map<std::string_view, int> pos;
    for (std::size_t i = 0; i < s.keys.size(); ++i) {
        pos.emplace(s.keys[i], s.positions[i]);
    }
    if (pos.size() != s.keys.size()) {
        throw Error(ErrorCode::InvalidConfig, "ranking keys must be unique");
    }
    std::vector<int> aligned(r.keys.size());
    for (std::size_t i = 0; i < r.keys.size(); ++i) {
        auto it = pos.find(r.keys[i]);
        if (it == pos.end()) {
            throw Error(ErrorCode::InvalidConfig, fmt::format("model '{}' missing from the other ranking", r.keys[i]));
        }
        aligned[i] = it->second;
    }
    return SpearmanFootrule(r.positions, aligned);
}

Eigen::MatrixXd CompareEstimators(std::span<const ScoreSource> sources, std::span<const RankedModel> models)
{
    if (sources.size() < 2 || models.size() < 2) {
        throw Error(ErrorCode::InvalidConfig, "comparison needs at least two scorers and two models");
    }
    std::vector<std::string> keys;
    std::vector<FeatureVector> fs;
    for (const auto& m : models) {
        keys.push_back(m.key);
        fs.push_back(m.features);
    }
    std::vector<Ranking> rankings;
    for (const auto& source : sources) {
        rankings.push_back(RankByScore(keys, DeterministicScores(source, fs)));
    }
    const auto n = static_cast<Eigen::Index>(sources.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            // rankings share key order, so positions can be compared directly
            m(i, j) = m(j, i) = SpearmanFootrule(rankings[static_cast<std::size_t>(i)].positions, rankings[static_cast<std::size_t>(j)].positions);
        }
    }
    return m;
}

std::string_view ToString(ToyMethod m)
{
    switch (m) {
    case ToyMethod::RankingUncertainty:
        return "ranking_uncertainty";
    case ToyMethod::RankingRandom:
        return "ranking_random";
    case ToyMethod::Classic:
        return "classic";
    }
    return "?";
}

namespace {

    struct ToyData {
        std::vector<FeatureVector> pool; // distinct feature vectors of the pool models
        std::vector<FeatureVector> test;
        std::vector<std::string> test_keys;
        Ranking truth;
    };

    ToyData MakeToyData(const ToyConfig& config, Rng& rng)
    {
        TreeShape shape { config.dims, config.min_depth, config.max_depth };
        ToyData d;
        std::set<FeatureVector> distinct;
        for (const auto& t : RampedHalfAndHalf(static_cast<std::size_t>(config.pool_models), shape, rng)) {
            distinct.insert(ExtractFeatures(t));
        }
        d.pool.assign(distinct.begin(), distinct.end());
        std::shuffle(d.pool.begin(), d.pool.end(), rng);
        for (const auto& t : RampedHalfAndHalf(static_cast<std::size_t>(config.test_models), shape, rng)) {
            d.test.push_back(ExtractFeatures(t));
            d.test_keys.push_back(ToInfix(t));
        }
        // identical test models carry the same key twice; suffix them so the
        // ranking stays a bijection
        std::map<std::string, int> seen;
        for (auto& k : d.test_keys) {
            int n = seen[k]++;
            if (n > 0) {
                k += fmt::format("#{}", n);
            }
        }
        std::vector<double> truth(d.test.size());
        for (std::size_t i = 0; i < d.test.size(); ++i) {
            truth[i] = config.truth.Score(d.test[i]);
        }
        d.truth = RankByScore(d.test_keys, truth);
        return d;
    }

    double FootruleVsTruth(const Mlp& net, const ToyData& d)
    {
        auto pred = net.Predict(EncodeFeatures(d.test));
        std::vector<double> scores(pred.data(), pred.data() + pred.size());
        return SpearmanFootrule(RankByScore(d.test_keys, scores).positions, d.truth.positions);
    }

    std::vector<std::size_t> BySigmaDescending(const Mlp& net, std::span<const FeatureVector> fs, int passes, Rng& rng)
    {
        auto preds = PredictWithUncertainty(net, fs, passes, rng);
        std::vector<std::size_t> order(fs.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a].sigma > preds[b].sigma; });
        return order;
    }

    // Greedily pairs candidates in the given order: each model at most once
    // per increment, never a pair that was asked before.
    std::vector<std::pair<std::size_t, std::size_t>> FormPairs(std::span<const std::size_t> order, std::size_t wanted,
        std::set<std::pair<std::size_t, std::size_t>>& asked)
    {
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        std::vector<bool> used(order.size(), false);
        for (std::size_t i = 0; i < order.size() && pairs.size() < wanted; ++i) {
            if (used[i]) {
                continue;
            }
            for (std::size_t j = i + 1; j < order.size(); ++j) {
                if (used[j]) {
                    continue;
                }
                auto key = std::minmax(order[i], order[j]);
                if (asked.insert(key).second) {
                    used[i] = used[j] = true;
                    pairs.emplace_back(order[i], order[j]);
                    break;
                }
            }
        }
        return pairs;
    }

    void RunRankingMethod(const ToyConfig& config, const ToyData& d, Estimator est, ToyMethod method, std::uint64_t seed,
        int warmup_epochs, std::vector<CurvePoint>& out)
    {
        const std::uint64_t stream = method == ToyMethod::RankingUncertainty ? 20 : 30;
        auto select_rng = SplitRng(seed, stream);
        auto train_rng = SplitRng(seed, stream + 1);
        OracleUser user(config.truth);
        Rng unused(0);
        std::vector<LabeledPair> answers;
        std::set<std::pair<std::size_t, std::size_t>> asked;
        out.push_back(CurvePoint { method, seed, 0, FootruleVsTruth(est.Net(), d), warmup_epochs });
        for (int spent = 0; spent + config.increment <= config.max_answers;) {
            std::vector<std::size_t> order;
            if (method == ToyMethod::RankingUncertainty) {
                order = BySigmaDescending(est.Net(), d.pool, config.mc_passes, select_rng);
            } else {
                order.resize(d.pool.size());
                std::iota(order.begin(), order.end(), 0);
                std::shuffle(order.begin(), order.end(), select_rng);
            }
            auto pairs = FormPairs(order, static_cast<std::size_t>(config.increment), asked);
            if (pairs.empty()) {
                break;
            }
            for (auto [a, b] : pairs) {
                auto choice = user.Answer(d.pool[a], d.pool[b], unused);
                answers.push_back(LabeledPair { d.pool[a], d.pool[b], LabelFor(choice), PairSource::Oracle });
            }
            spent += static_cast<int>(pairs.size());
            for (int e = 0; e < config.train_epochs; ++e) {
                TrainEpoch(est, answers, train_rng);
            }
            out.push_back(CurvePoint { method, seed, spent, FootruleVsTruth(est.Net(), d), warmup_epochs });
        }
    }

    void RunClassicMethod(const ToyConfig& config, const ToyData& d, Estimator est, std::uint64_t seed, int warmup_epochs,
        std::vector<CurvePoint>& out)
    {
        auto select_rng = SplitRng(seed, 40);
        auto train_rng = SplitRng(seed, 41);
        std::vector<bool> labelled(d.pool.size(), false);
        std::vector<std::pair<FeatureVector, double>> labels;
        out.push_back(CurvePoint { ToyMethod::Classic, seed, 0, FootruleVsTruth(est.Net(), d), warmup_epochs });
        for (int effort = config.increment; effort <= config.max_answers; effort += config.increment) {
            // half the answers of the ranking methods at equal user effort
            const auto budget = static_cast<std::size_t>(effort / 2);
            auto order = BySigmaDescending(est.Net(), d.pool, config.mc_passes, select_rng);
            for (auto i : order) {
                if (labels.size() >= budget) {
                    break;
                }
                if (!labelled[i]) {
                    labelled[i] = true;
                    labels.emplace_back(d.pool[i], config.truth.NormalizedScore(d.pool[i]));
                }
            }
            std::vector<std::size_t> idx(labels.size());
            std::iota(idx.begin(), idx.end(), 0);
            for (int e = 0; e < config.train_epochs; ++e) {
                std::shuffle(idx.begin(), idx.end(), train_rng);
                for (auto i : idx) {
                    est.TrainOnTarget(labels[i].first, labels[i].second, train_rng);
                }
            }
            out.push_back(CurvePoint { ToyMethod::Classic, seed, effort, FootruleVsTruth(est.Net(), d), warmup_epochs });
        }
    }

} // namespace

std::vector<CurvePoint> RunToyRepetition(const ToyConfig& config, std::uint64_t seed)
{
    if (config.increment < 1 || config.max_answers < config.increment || config.pool_models < 4 || config.test_models < 2) {
        throw Error(ErrorCode::InvalidConfig, "toy experiment sizes are inconsistent");
    }
    auto data_rng = SplitRng(seed, 10);
    auto data = MakeToyData(config, data_rng);

    auto init_rng = SplitRng(seed, 11);
    auto warm_rng = SplitRng(seed, 12);
    auto ranking = Estimator::Ranking(init_rng);
    auto classic = Estimator::Classic(init_rng);
    auto ranking_warm = WarmupRanking(ranking, config.warmup, data.pool, warm_rng, config.warmup_options);
    auto classic_warm = WarmupClassic(classic, config.warmup, data.pool, warm_rng, config.warmup_options);

    std::vector<CurvePoint> out;
    RunRankingMethod(config, data, ranking, ToyMethod::RankingUncertainty, seed, ranking_warm.epochs, out);
    RunRankingMethod(config, data, ranking, ToyMethod::RankingRandom, seed, ranking_warm.epochs, out);
    RunClassicMethod(config, data, classic, seed, classic_warm.epochs, out);
    return out;
}

std::vector<CurvePoint> RunToyExperiment(const ToyConfig& config)
{
    std::vector<CurvePoint> all;
    for (int s = 0; s < config.seeds; ++s) {
        auto rep = RunToyRepetition(config, config.base_seed + static_cast<std::uint64_t>(s));
        all.insert(all.end(), rep.begin(), rep.end());
    }
    return all;
}

double Quantile(std::vector<double> values, double q)
{
    if (values.empty()) {
        throw Error(ErrorCode::InvalidConfig, "quantile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<CurveSummary> SummarizeCurves(std::span<const CurvePoint> points)
{
    std::map<std::pair<int, int>, std::vector<double>> groups;
    for (const auto& p : points) {
        groups[{ static_cast<int>(p.method), p.feedback }].push_back(p.footrule);
    }
    std::vector<CurveSummary> out;
    for (const auto& [key, values] : groups) {
        CurveSummary s;
        s.method = static_cast<ToyMethod>(key.first);
        s.feedback = key.second;
        s.n = static_cast<int>(values.size());
        s.median = Quantile(values, 0.5);
        s.q1 = Quantile(values, 0.25);
        s.q3 = Quantile(values, 0.75);
        s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        out.push_back(s);
    }
    return out;
}

nlohmann::json ToJson(const CurvePoint& p)
{
    return { { "method", ToString(p.method) }, { "seed", p.seed }, { "feedback_count", p.feedback }, { "footrule", p.footrule },
        { "warmup_epochs", p.warmup_epochs } };
}

nlohmann::json ToJson(const CurveSummary& s)
{
    return { { "method", ToString(s.method) }, { "feedback_count", s.feedback }, { "n", s.n }, { "median", s.median }, { "mean", s.mean },
        { "q1", s.q1 }, { "q3", s.q3 } };
}

} // namespace steer
