#include "steer/front.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "steer/common.hpp"

namespace steer {

nlohmann::json ToJson(const FeatureVector& f)
{
    return {
        { "size", f.size },
        { "n_ops", f.n_ops },
        { "n_nonarith", f.n_nonarith },
        { "max_chain", f.max_chain },
        { "n_consts", f.n_consts },
        { "n_dims", f.n_dims },
    };
}

FeatureVector FeaturesFromJson(const nlohmann::json& j)
{
    FeatureVector f;
    f.size = j.at("size").get<int>();
    f.n_ops = j.at("n_ops").get<int>();
    f.n_nonarith = j.at("n_nonarith").get<int>();
    f.max_chain = j.at("max_chain").get<int>();
    f.n_consts = j.at("n_consts").get<int>();
    f.n_dims = j.at("n_dims").get<int>();
    return f;
}

nlohmann::json ToJson(const FrontEntry& e)
{
    return {
        { "expression", e.expression },
        { "mse_train", e.mse_train },
        { "train_error", e.train_error },
        { "test_error", e.test_error },
        { "psi_hat", e.psi_hat },
        { "features", ToJson(e.features) },
        { "generation", e.generation },
    };
}

FrontEntry FrontEntryFromJson(const nlohmann::json& j)
{
    FrontEntry e;
    e.expression = j.at("expression").get<std::string>();
    e.mse_train = j.at("mse_train").get<double>();
    e.train_error = j.at("train_error").get<double>();
    e.test_error = j.at("test_error").get<double>();
    e.psi_hat = j.at("psi_hat").get<double>();
    e.features = FeaturesFromJson(j.at("features"));
    e.generation = j.at("generation").get<int>();
    return e;
}

void WriteFront(std::ostream& out, const TradeoffFront& front)
{
    for (const auto& e : front.entries) {
        out << ToJson(e).dump() << '\n';
    }
}

TradeoffFront ReadFront(std::istream& in)
{
    TradeoffFront front;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            front.entries.push_back(FrontEntryFromJson(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::Data, fmt::format("front record {}: {}", lineno, ex.what()));
        }
    }
    return front;
}

void SaveFront(const std::filesystem::path& path, const TradeoffFront& front)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Runtime, fmt::format("cannot write '{}'", path.string()));
    }
    WriteFront(out, front);
}

TradeoffFront LoadFront(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Data, fmt::format("cannot read front file '{}'", path.string()));
    }
    return ReadFront(in);
}

std::vector<FrontEntry> SortedByInterpretability(const TradeoffFront& front)
{
    auto sorted = front.entries;
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.psi_hat != b.psi_hat) {
            return a.psi_hat < b.psi_hat;
        }
        return a.mse_train < b.mse_train;
    });
    return sorted;
}

namespace {
    std::size_t PercentileIndex(std::size_t size, int tau)
    {
        if (tau < 0 || tau > 100) {
            throw Error(ErrorCode::InvalidConfig, fmt::format("percentile {} outside [0, 100]", tau));
        }
        return static_cast<std::size_t>(std::lround(tau / 100.0 * static_cast<double>(size - 1)));
    }
} // namespace

FrontEntry FrontAtPercentile(const TradeoffFront& front, int tau)
{
    if (front.Empty()) {
        throw Error(ErrorCode::Data, "empty trade-off front");
    }
    auto sorted = SortedByInterpretability(front);
    return sorted[PercentileIndex(sorted.size(), tau)];
}

std::string_view ToString(Competitor c)
{
    return c == Competitor::Phi ? "phi" : "size";
}

std::vector<SurveyPair> BuildSurveyPairs(const TradeoffFront& learned, const std::vector<CompetitorPool>& pools,
    const std::vector<int>& taus)
{
    if (pools.empty()) {
        throw Error(ErrorCode::InvalidConfig, "no precomputed competitor fronts");
    }
    std::vector<SurveyPair> pairs;
    for (int tau : taus) {
        auto mine = FrontAtPercentile(learned, tau);
        for (const auto& pool : pools) {
            const FrontEntry* best = nullptr;
            double best_gap = std::numeric_limits<double>::infinity();
            for (const auto& front : pool.fronts) {
                for (const auto& candidate : front.entries) {
                    double gap = std::abs(candidate.test_error - mine.test_error);
                    if (gap < best_gap) {
                        best_gap = gap;
                        best = &candidate;
                    }
                }
            }
            if (best == nullptr) {
                throw Error(ErrorCode::InvalidConfig, fmt::format("competitor pool '{}' has no models", ToString(pool.kind)));
            }
            pairs.push_back(SurveyPair { tau, pool.kind, mine, *best, best_gap });
        }
    }
    return pairs;
}

} // namespace steer
