#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "steer/expr.hpp"

namespace steer {

struct FrontEntry {
    std::string expression; // canonical infix
    double mse_train = 0.0; // selection objective (scaled MSE on the training rows)
    double train_error = 0.0; // task metric: MSE or inaccuracy
    double test_error = 0.0;
    double psi_hat = 0.0;
    FeatureVector features;
    int generation = 0; // generation in which the model was created

    friend bool operator==(const FrontEntry&, const FrontEntry&) = default;
};

// Mutually non-dominated models in (mse_train, -psi_hat), sorted by mse_train.
struct TradeoffFront {
    std::vector<FrontEntry> entries;

    bool Empty() const { return entries.empty(); }
    std::size_t Size() const { return entries.size(); }
    friend bool operator==(const TradeoffFront&, const TradeoffFront&) = default;
};

nlohmann::json ToJson(const FeatureVector& f);
FeatureVector FeaturesFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const FrontEntry& e);
FrontEntry FrontEntryFromJson(const nlohmann::json& j);

// One JSON object per line. Doubles are written in shortest round-trip form
// so reading back reproduces the values bit for bit.
void WriteFront(std::ostream& out, const TradeoffFront& front);
TradeoffFront ReadFront(std::istream& in);
void SaveFront(const std::filesystem::path& path, const TradeoffFront& front);
TradeoffFront LoadFront(const std::filesystem::path& path);

// Entry at index round(tau / 100 * (size - 1)) of the front ordered by
// psi_hat ascending (ties: lower train error first). tau = 0 is the most
// accurate extreme, tau = 100 the most interpretable. Throws on empty fronts.
FrontEntry FrontAtPercentile(const TradeoffFront& front, int tau);
std::vector<FrontEntry> SortedByInterpretability(const TradeoffFront& front);

enum class Competitor { Phi, Size };
std::string_view ToString(Competitor c);

struct SurveyPair {
    int tau = 0;
    Competitor competitor = Competitor::Phi;
    FrontEntry learned;
    FrontEntry other;
    double accuracy_gap = 0.0; // |learned.test_error - other.test_error|
};

struct CompetitorPool {
    Competitor kind;
    std::vector<TradeoffFront> fronts;
};

// For each tau and each competitor kind, pair the learned entry at tau with
// the pool entry of minimal |test error difference| (first candidate wins
// ties). Throws Error(InvalidConfig) when no pool or an empty pool is given.
std::vector<SurveyPair> BuildSurveyPairs(const TradeoffFront& learned, const std::vector<CompetitorPool>& pools,
    const std::vector<int>& taus = { 30, 50 });

} // namespace steer
