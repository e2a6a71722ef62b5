#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "steer/common.hpp"
#include "steer/expr.hpp"
#include "steer/network.hpp"

namespace steer {

// Features are divided by the node cap before entering a network.
inline constexpr double kFeatureScale = static_cast<double>(kMaxTreeNodes);
inline constexpr int kDefaultMcPasses = 10;

Eigen::VectorXd EncodeFeatures(const FeatureVector& f);
Eigen::MatrixXd EncodeFeatures(std::span<const FeatureVector> fs); // 6 x N

// Deterministic interpretability indices. Higher is more interpretable.
class ReferenceIndex {
public:
    enum class Kind { Size, LinearPhi };

    // Stand-in linear coefficients (bias, then one weight per raw feature).
    // These are not the published coefficients of any prior model.
    static constexpr std::array<double, 7> kDefaultPhi {
        0.0, -0.5 / kFeatureScale, 0.0, -1.0 / kFeatureScale, -1.0 / kFeatureScale, -0.25 / kFeatureScale, -0.25 / kFeatureScale
    };

    static ReferenceIndex Size();
    static ReferenceIndex Phi(std::span<const double> coefficients);
    static ReferenceIndex DefaultPhi() { return Phi(kDefaultPhi); }
    static ReferenceIndex Parse(std::string_view name); // "size" | "phi"

    Kind GetKind() const { return kind_; }
    std::string_view Name() const { return kind_ == Kind::Size ? "size" : "phi"; }
    const std::vector<double>& Coefficients() const { return phi_; }

    // size: -(node count); phi: bias + sum w_i * feature_i.
    double Score(const FeatureVector& f) const;
    // Score on a scale comparable to network outputs (size / kFeatureScale).
    double NormalizedScore(const FeatureVector& f) const;

    nlohmann::json ToJson() const;
    static ReferenceIndex FromJson(const nlohmann::json& j);

private:
    Kind kind_ = Kind::Size;
    std::vector<double> phi_;
};

// L = l * (psi1 - psi2), l = -1 when the first model is the more interpretable.
double PairLoss(double psi1, double psi2, int label);

enum class PairSource { Human, Warmup, Oracle };
std::string_view ToString(PairSource s);
PairSource ParsePairSource(std::string_view s);

struct LabeledPair {
    FeatureVector first;
    FeatureVector second;
    int label = -1; // -1: first preferred, +1: second preferred
    PairSource source = PairSource::Oracle;

    friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

nlohmann::json ToJson(const LabeledPair& p);
LabeledPair LabeledPairFromJson(const nlohmann::json& j);

// Label a pair by a reference ordering; ties go to the first model.
int ReferenceLabel(const ReferenceIndex& ref, const FeatureVector& first, const FeatureVector& second);

// Gradient of the pair loss w.r.t. all parameters. A null rng disables dropout.
Gradients PairLossGradient(const Mlp& net, const LabeledPair& pair, Rng* rng, double* loss = nullptr);
// Gradient of the squared error (prediction - target)^2.
Gradients SquaredErrorGradient(const Mlp& net, const FeatureVector& f, double target, Rng* rng, double* loss = nullptr);

struct TrainingOptions {
    double learning_rate = 0.001;
    double momentum = 0.9;
};

// Mutable network plus optimizer state. Ranking and classic variants share it;
// only the head and the training signal differ.
class Estimator {
public:
    Estimator() = default;
    Estimator(Mlp net, TrainingOptions options = {});

    static Estimator Ranking(Rng& init_rng, TrainingOptions options = {});
    static Estimator Classic(Rng& init_rng, TrainingOptions options = {});

    // One SGD step on the pair loss, dropout active on both passes.
    void TrainOnPair(const LabeledPair& pair, Rng& rng);
    // One SGD step on the squared error against a regression target.
    void TrainOnTarget(const FeatureVector& f, double target, Rng& rng);

    const Mlp& Net() const { return net_; }
    Mlp& MutableNet() { return net_; }
    std::shared_ptr<const Mlp> Snapshot() const { return std::make_shared<const Mlp>(net_); }

private:
    Mlp net_;
    SgdMomentum optimizer_;
};

struct Prediction {
    double mean = 0.0;
    double sigma = 0.0;
};

// k stochastic passes with dropout active; mean and (population) standard
// deviation per input. Identical feature vectors share one estimate.
std::vector<Prediction> PredictWithUncertainty(const Mlp& net, std::span<const FeatureVector> fs, int k, Rng& rng);
Prediction PredictWithUncertainty(const Mlp& net, const FeatureVector& f, int k, Rng& rng);
double MeanSigma(std::span<const Prediction> ps);

struct WarmupOptions {
    int epoch_cap = 20;
    int mc_passes = kDefaultMcPasses;
};

struct WarmupResult {
    int epochs = 0;
    // Mean prediction sigma over the model set: before training, then after
    // every epoch.
    std::vector<double> mean_sigma;
    std::vector<LabeledPair> last_epoch_pairs;
};

// Halting rule shared by both warm-up flavours: stop once the mean of the
// last two sigma readings falls below the mean of the two before them.
bool WarmupShouldHalt(std::span<const double> mean_sigma);

// Each epoch trains on |models| random pairs labelled by the reference order.
WarmupResult WarmupRanking(Estimator& est, const ReferenceIndex& ref, std::span<const FeatureVector> models, Rng& rng,
    const WarmupOptions& options = {});
// Classic variant: each epoch is one shuffled pass of regression steps on the
// normalized reference score.
WarmupResult WarmupClassic(Estimator& est, const ReferenceIndex& ref, std::span<const FeatureVector> models, Rng& rng,
    const WarmupOptions& options = {});

// One shuffled pass of pair steps over a buffer.
void TrainEpoch(Estimator& est, std::span<const LabeledPair> pairs, Rng& rng);

struct Score {
    double psi = 0.0;
    double sigma = 0.0;
};

// Interpretability objective used by the evolution.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual std::vector<Score> ScoreAll(std::span<const FeatureVector> fs, Rng& rng) const = 0;
    virtual bool Deterministic() const = 0;
    virtual std::uint64_t Version() const { return 0; }
};

class ReferenceScorer final : public Scorer {
public:
    explicit ReferenceScorer(ReferenceIndex index)
        : index_(std::move(index))
    {
    }
    std::vector<Score> ScoreAll(std::span<const FeatureVector> fs, Rng& rng) const override;
    bool Deterministic() const override { return true; }
    const ReferenceIndex& Index() const { return index_; }

private:
    ReferenceIndex index_;
};

// MC-dropout estimates from an immutable network snapshot.
class NetScorer final : public Scorer {
public:
    explicit NetScorer(std::shared_ptr<const Mlp> net, int passes = kDefaultMcPasses)
        : net_(std::move(net))
        , passes_(passes)
    {
    }
    std::vector<Score> ScoreAll(std::span<const FeatureVector> fs, Rng& rng) const override;
    bool Deterministic() const override { return false; }
    std::uint64_t Version() const override { return net_->Version(); }
    const Mlp& Net() const { return *net_; }

private:
    std::shared_ptr<const Mlp> net_;
    int passes_;
};

// Latest published estimator weights. Readers get a complete, immutable
// snapshot; publication replaces the pointer atomically.
class SnapshotCell {
public:
    explicit SnapshotCell(std::shared_ptr<const Mlp> initial = nullptr)
        : current_(std::move(initial))
    {
    }

    void Publish(std::shared_ptr<const Mlp> next)
    {
        std::lock_guard lock(mutex_);
        current_ = std::move(next);
    }

    std::shared_ptr<const Mlp> Acquire() const
    {
        std::lock_guard lock(mutex_);
        return current_;
    }

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const Mlp> current_;
};

} // namespace steer
