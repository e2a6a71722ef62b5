#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "steer/common.hpp"
#include "steer/estimator.hpp"

namespace steer {

enum class Choice { Left, Right };
std::string_view ToString(Choice c);
Choice ParseChoice(std::string_view s);
// l = -1 when the left (first) model is preferred.
inline int LabelFor(Choice c) { return c == Choice::Left ? -1 : 1; }

// Deterministic scoring source: a reference index or a network evaluated
// without dropout.
using ScoreSource = std::variant<ReferenceIndex, std::shared_ptr<const Mlp>>;
double DeterministicScore(const ScoreSource& source, const FeatureVector& f);
std::vector<double> DeterministicScores(const ScoreSource& source, std::span<const FeatureVector> fs);

// "size" | "phi" | "snapshot:<path>"
ScoreSource ParseScoreSource(std::string_view text);

// Scripted stand-in for a user: prefers the higher-scoring model (left on
// ties) and flips its answer with probability noise_p.
class OracleUser {
public:
    explicit OracleUser(ScoreSource target, double noise_p = 0.0);

    Choice Answer(const FeatureVector& left, const FeatureVector& right, Rng& rng) const;
    const ScoreSource& Target() const { return target_; }
    double NoiseP() const { return noise_p_; }

private:
    ScoreSource target_;
    double noise_p_;
};

// positions[i] is the 1-based rank of keys[i].
struct Ranking {
    std::vector<std::string> keys;
    std::vector<int> positions;
};

// Rank by score descending; ties broken by key ascending.
Ranking RankByScore(std::vector<std::string> keys, std::span<const double> scores);

// (3 / q(r)) * sum |R_i - S_i| with q(r) = r^2 for even r and r^2 - 1 for
// odd r. Throws Error(InvalidConfig) on mismatched model sets or r < 2.
double SpearmanFootrule(std::span<const int> r, std::span<const int> s);
double SpearmanFootrule(const Ranking& r, const Ranking& s);

struct RankedModel {
    std::string key; // canonical expression, used for tie-breaking
    FeatureVector features;
};

// Symmetric matrix of pairwise footrules between the rankings that each
// source induces on the models.
Eigen::MatrixXd CompareEstimators(std::span<const ScoreSource> sources, std::span<const RankedModel> models);

// Toy experiment: learn a hidden linear index from pairwise answers.
enum class ToyMethod { RankingUncertainty, RankingRandom, Classic };
std::string_view ToString(ToyMethod m);

struct ToyConfig {
    int seeds = 30;
    std::uint64_t base_seed = 1;
    int pool_models = 1000; // models shown to the simulated user (also the warm-up set)
    int test_models = 1000; // held out, only used for the footrule
    int increment = 25; // ranking answers between checkpoints
    int max_answers = 500;
    int train_epochs = 2; // passes over the answer buffer after each increment
    int mc_passes = kDefaultMcPasses;
    std::size_t dims = 13;
    int min_depth = 1;
    int max_depth = 4;
    ReferenceIndex truth = ReferenceIndex::DefaultPhi();
    ReferenceIndex warmup = ReferenceIndex::Size();
    WarmupOptions warmup_options {};
};

struct CurvePoint {
    ToyMethod method = ToyMethod::RankingUncertainty;
    std::uint64_t seed = 0;
    int feedback = 0; // user answers spent (ranking answers; classic spends half as many labels)
    double footrule = 0.0;
    int warmup_epochs = 0;
};

struct CurveSummary {
    ToyMethod method = ToyMethod::RankingUncertainty;
    int feedback = 0;
    int n = 0;
    double median = 0.0;
    double mean = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

std::vector<CurvePoint> RunToyRepetition(const ToyConfig& config, std::uint64_t seed);
std::vector<CurvePoint> RunToyExperiment(const ToyConfig& config);
std::vector<CurveSummary> SummarizeCurves(std::span<const CurvePoint> points);

// Linear-interpolated quantile of an unsorted sample.
double Quantile(std::vector<double> values, double q);

nlohmann::json ToJson(const CurvePoint& p);
nlohmann::json ToJson(const CurveSummary& s);

} // namespace steer
