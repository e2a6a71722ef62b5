#include "steer/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

namespace steer {

Eigen::VectorXd EncodeFeatures(const FeatureVector& f)
{
    auto a = f.AsArray();
    Eigen::VectorXd x(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        x[static_cast<Eigen::Index>(i)] = a[i] / kFeatureScale;
    }
    return x;
}

Eigen::MatrixXd EncodeFeatures(std::span<const FeatureVector> fs)
{
    Eigen::MatrixXd x(static_cast<Eigen::Index>(FeatureVector::kCount), static_cast<Eigen::Index>(fs.size()));
    for (std::size_t i = 0; i < fs.size(); ++i) {
        x.col(static_cast<Eigen::Index>(i)) = EncodeFeatures(fs[i]);
    }
    return x;
}

ReferenceIndex ReferenceIndex::Size()
{
    return ReferenceIndex {};
}

ReferenceIndex ReferenceIndex::Phi(std::span<const double> coefficients)
{
    if (coefficients.size() != FeatureVector::kCount + 1) {
        throw Error(ErrorCode::InvalidConfig,
            fmt::format("linear phi index needs {} coefficients (bias + one per feature), got {}", FeatureVector::kCount + 1,
                coefficients.size()));
    }
    ReferenceIndex index;
    index.kind_ = Kind::LinearPhi;
    index.phi_.assign(coefficients.begin(), coefficients.end());
    return index;
}

ReferenceIndex ReferenceIndex::Parse(std::string_view name)
{
    if (name == "size") {
        return Size();
    }
    if (name == "phi") {
        return DefaultPhi();
    }
    throw Error(ErrorCode::InvalidConfig, fmt::format("unknown reference index '{}' (expected size|phi)", name));
}

double ReferenceIndex::Score(const FeatureVector& f) const
{
    if (kind_ == Kind::Size) {
        return -static_cast<double>(f.size);
    }
    if (phi_.size() != FeatureVector::kCount + 1) {
        throw Error(ErrorCode::InvalidConfig, "linear phi index has no coefficients");
    }
    auto a = f.AsArray();
    double s = phi_[0];
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += phi_[i + 1] * a[i];
    }
    return s;
}

double ReferenceIndex::NormalizedScore(const FeatureVector& f) const
{
    return kind_ == Kind::Size ? Score(f) / kFeatureScale : Score(f);
}

nlohmann::json ReferenceIndex::ToJson() const
{
    nlohmann::json j { { "kind", Name() } };
    if (kind_ == Kind::LinearPhi) {
        j["coefficients"] = phi_;
    }
    return j;
}

ReferenceIndex ReferenceIndex::FromJson(const nlohmann::json& j)
{
    auto kind = j.at("kind").get<std::string>();
    if (kind == "size") {
        return Size();
    }
    if (kind == "phi") {
        if (!j.contains("coefficients")) {
            throw Error(ErrorCode::InvalidConfig, "linear phi index requires 'coefficients'");
        }
        auto c = j.at("coefficients").get<std::vector<double>>();
        return Phi(c);
    }
    throw Error(ErrorCode::InvalidConfig, fmt::format("unknown reference index '{}'", kind));
}

double PairLoss(double psi1, double psi2, int label)
{
    return label * (psi1 - psi2);
}

std::string_view ToString(PairSource s)
{
    switch (s) {
    case PairSource::Human:
        return "human";
    case PairSource::Warmup:
        return "warmup";
    case PairSource::Oracle:
        return "oracle";
    }
    return "oracle";
}

PairSource ParsePairSource(std::string_view s)
{
    if (s == "human") {
        return PairSource::Human;
    }
    if (s == "warmup") {
        return PairSource::Warmup;
    }
    if (s == "oracle") {
        return PairSource::Oracle;
    }
    throw Error(ErrorCode::Data, fmt::format("unknown pair source '{}'", s));
}

namespace {
    nlohmann::json FeaturesJson(const FeatureVector& f)
    {
        auto a = f.AsArray();
        return nlohmann::json::array({ int(a[0]), int(a[1]), int(a[2]), int(a[3]), int(a[4]), int(a[5]) });
    }

    FeatureVector FeaturesFrom(const nlohmann::json& j)
    {
        auto v = j.get<std::vector<int>>();
        if (v.size() != FeatureVector::kCount) {
            throw Error(ErrorCode::Data, "feature vector must have 6 entries");
        }
        return FeatureVector { v[0], v[1], v[2], v[3], v[4], v[5] };
    }
} // namespace

nlohmann::json ToJson(const LabeledPair& p)
{
    return { { "first", FeaturesJson(p.first) }, { "second", FeaturesJson(p.second) }, { "label", p.label },
        { "source", ToString(p.source) } };
}

LabeledPair LabeledPairFromJson(const nlohmann::json& j)
{
    LabeledPair p;
    p.first = FeaturesFrom(j.at("first"));
    p.second = FeaturesFrom(j.at("second"));
    p.label = j.at("label").get<int>();
    p.source = ParsePairSource(j.at("source").get<std::string>());
    if (p.label != -1 && p.label != 1) {
        throw Error(ErrorCode::Data, "pair label must be -1 or +1");
    }
    return p;
}

int ReferenceLabel(const ReferenceIndex& ref, const FeatureVector& first, const FeatureVector& second)
{
    return ref.Score(first) >= ref.Score(second) ? -1 : 1;
}

Gradients PairLossGradient(const Mlp& net, const LabeledPair& pair, Rng* rng, double* loss)
{
    auto grads = net.ZeroGradients();
    Mlp::Tape tape;
    double psi1 = net.Forward(EncodeFeatures(pair.first), rng, tape);
    net.Backward(tape, static_cast<double>(pair.label), grads);
    double psi2 = net.Forward(EncodeFeatures(pair.second), rng, tape);
    net.Backward(tape, -static_cast<double>(pair.label), grads);
    if (loss != nullptr) {
        *loss = PairLoss(psi1, psi2, pair.label);
    }
    return grads;
}

Gradients SquaredErrorGradient(const Mlp& net, const FeatureVector& f, double target, Rng* rng, double* loss)
{
    auto grads = net.ZeroGradients();
    Mlp::Tape tape;
    double out = net.Forward(EncodeFeatures(f), rng, tape);
    net.Backward(tape, 2.0 * (out - target), grads);
    if (loss != nullptr) {
        *loss = (out - target) * (out - target);
    }
    return grads;
}

Estimator::Estimator(Mlp net, TrainingOptions options)
    : net_(std::move(net))
    , optimizer_(net_, options.learning_rate, options.momentum)
{
}

Estimator Estimator::Ranking(Rng& init_rng, TrainingOptions options)
{
    return Estimator(Mlp::RankingNet(init_rng), options);
}

Estimator Estimator::Classic(Rng& init_rng, TrainingOptions options)
{
    return Estimator(Mlp::ClassicNet(init_rng), options);
}

void Estimator::TrainOnPair(const LabeledPair& pair, Rng& rng)
{
    optimizer_.Step(net_, PairLossGradient(net_, pair, &rng));
}

void Estimator::TrainOnTarget(const FeatureVector& f, double target, Rng& rng)
{
    optimizer_.Step(net_, SquaredErrorGradient(net_, f, target, &rng));
}

std::vector<Prediction> PredictWithUncertainty(const Mlp& net, std::span<const FeatureVector> fs, int k, Rng& rng)
{
    if (k < 2) {
        throw Error(ErrorCode::InvalidConfig, "uncertainty estimation needs at least 2 passes");
    }
    std::map<FeatureVector, std::size_t> slot;
    std::vector<FeatureVector> unique;
    std::vector<std::size_t> index(fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i) {
        auto [it, inserted] = slot.try_emplace(fs[i], unique.size());
        if (inserted) {
            unique.push_back(fs[i]);
        }
        index[i] = it->second;
    }

    std::vector<Prediction> unique_pred(unique.size());
    if (!unique.empty()) {
        Eigen::MatrixXd samples = net.Sample(EncodeFeatures(unique), k, rng); // k x U
        // Shift by the first pass so identical passes give exactly zero spread.
        Eigen::RowVectorXd first = samples.row(0);
        Eigen::MatrixXd shifted = samples.rowwise() - first;
        Eigen::RowVectorXd offset = shifted.colwise().mean();
        Eigen::RowVectorXd var = (shifted.rowwise() - offset).array().square().colwise().mean();
        for (std::size_t u = 0; u < unique.size(); ++u) {
            auto c = static_cast<Eigen::Index>(u);
            unique_pred[u] = Prediction { first(c) + offset(c), std::sqrt(std::max(0.0, var(c))) };
        }
    }
    std::vector<Prediction> out(fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i) {
        out[i] = unique_pred[index[i]];
    }
    return out;
}

Prediction PredictWithUncertainty(const Mlp& net, const FeatureVector& f, int k, Rng& rng)
{
    return PredictWithUncertainty(net, std::span<const FeatureVector>(&f, 1), k, rng).front();
}

double MeanSigma(std::span<const Prediction> ps)
{
    if (ps.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const auto& p : ps) {
        s += p.sigma;
    }
    return s / static_cast<double>(ps.size());
}

bool WarmupShouldHalt(std::span<const double> s)
{
    const auto n = s.size();
    if (n < 4) {
        return false;
    }
    return (s[n - 1] + s[n - 2]) / 2.0 < (s[n - 3] + s[n - 4]) / 2.0;
}

namespace {

    template <typename EpochFn>
    WarmupResult RunWarmup(Estimator& est, std::span<const FeatureVector> models, Rng& rng, const WarmupOptions& options, EpochFn epoch)
    {
        if (models.size() < 4) {
            throw Error(ErrorCode::InvalidConfig, "warm-up needs at least 4 models");
        }
        WarmupResult result;
        result.mean_sigma.push_back(MeanSigma(PredictWithUncertainty(est.Net(), models, options.mc_passes, rng)));
        while (result.epochs < options.epoch_cap) {
            epoch(result);
            ++result.epochs;
            result.mean_sigma.push_back(MeanSigma(PredictWithUncertainty(est.Net(), models, options.mc_passes, rng)));
            if (WarmupShouldHalt(result.mean_sigma)) {
                break;
            }
        }
        return result;
    }

} // namespace

WarmupResult WarmupRanking(Estimator& est, const ReferenceIndex& ref, std::span<const FeatureVector> models, Rng& rng,
    const WarmupOptions& options)
{
    return RunWarmup(est, models, rng, options, [&](WarmupResult& result) {
        std::uniform_int_distribution<std::size_t> pick(0, models.size() - 1);
        result.last_epoch_pairs.clear();
        for (std::size_t i = 0; i < models.size(); ++i) {
            auto a = pick(rng);
            auto b = pick(rng);
            while (b == a) {
                b = pick(rng);
            }
            LabeledPair pair { models[a], models[b], ReferenceLabel(ref, models[a], models[b]), PairSource::Warmup };
            est.TrainOnPair(pair, rng);
            result.last_epoch_pairs.push_back(pair);
        }
    });
}

WarmupResult WarmupClassic(Estimator& est, const ReferenceIndex& ref, std::span<const FeatureVector> models, Rng& rng,
    const WarmupOptions& options)
{
    std::vector<std::size_t> order(models.size());
    std::iota(order.begin(), order.end(), 0);
    return RunWarmup(est, models, rng, options, [&](WarmupResult&) {
        std::shuffle(order.begin(), order.end(), rng);
        for (auto i : order) {
            est.TrainOnTarget(models[i], ref.NormalizedScore(models[i]), rng);
        }
    });
}

void TrainEpoch(Estimator& est, std::span<const LabeledPair> pairs, Rng& rng)
{
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (auto i : order) {
        est.TrainOnPair(pairs[i], rng);
    }
}

std::vector<Score> ReferenceScorer::ScoreAll(std::span<const FeatureVector> fs, Rng&) const
{
    std::vector<Score> out;
    out.reserve(fs.size());
    for (const auto& f : fs) {
        out.push_back(Score { index_.Score(f), 0.0 });
    }
    return out;
}

std::vector<Score> NetScorer::ScoreAll(std::span<const FeatureVector> fs, Rng& rng) const
{
    auto preds = PredictWithUncertainty(*net_, fs, passes_, rng);
    std::vector<Score> out;
    out.reserve(preds.size());
    for (const auto& p : preds) {
        out.push_back(Score { p.mean, p.sigma });
    }
    return out;
}

} // namespace steer
