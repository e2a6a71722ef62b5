#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "steer/active_loop.hpp"
#include "steer/dataset.hpp"
#include "steer/evolution.hpp"
#include "steer/front.hpp"

namespace steer {

inline const std::vector<int> kReportTaus { 0, 10, 30, 50 };

enum class EstimatorMode { Learned, Phi, Size };
std::string_view ToString(EstimatorMode m);
EstimatorMode ParseEstimatorMode(std::string_view s);

struct BatchConfig {
    std::filesystem::path dataset;
    Task task = Task::Regression;
    EstimatorMode mode = EstimatorMode::Size;
    int runs = 10;
    std::uint64_t seed = 0; // run r uses seed + r for its split and search
    EvolutionConfig evolution {};
    OracleSettings oracle {}; // learned mode only
    std::filesystem::path out_dir;
};

nlohmann::json ToJson(const BatchConfig& c);

// Runs every seed and writes <out>/config.json and <out>/run_NNN/front.jsonl
// (plus the live-run artifacts in learned mode). Returns the fronts in run
// order. Throws InvalidConfig when out_dir cannot be written.
std::vector<TradeoffFront> RunBatch(const BatchConfig& config);

// Mean front size and mean train/test error of the entry at each tau.
struct AggregateRow {
    std::size_t runs = 0;
    double mean_front_size = 0.0;
    std::vector<int> taus;
    std::vector<double> train; // per tau
    std::vector<double> test;
};

AggregateRow Aggregate(const std::vector<TradeoffFront>& fronts, const std::vector<int>& taus = kReportTaus);
nlohmann::json ToJson(const AggregateRow& row, const std::string& label);
// Fixed-width rows: label, front size, train errors per tau, test errors per tau.
std::string FormatAggregateTable(const std::vector<std::pair<std::string, AggregateRow>>& rows);

// Example models from one front chosen at random, one per tau.
struct ExampleRow {
    int tau = 0;
    FrontEntry entry;
};
std::vector<ExampleRow> ExampleModels(const std::vector<TradeoffFront>& fronts, Rng& rng, const std::vector<int>& taus = kReportTaus);
std::string FormatExampleTable(const std::vector<ExampleRow>& rows);

// All front.jsonl files below the given directories (a file argument is taken
// as is). Throws Data when nothing is found.
std::vector<std::filesystem::path> FindFrontFiles(const std::vector<std::filesystem::path>& roots);

} // namespace steer
