#include "steer/report.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

namespace steer {

using nlohmann::json;

std::string_view ToString(EstimatorMode m)
{
    switch (m) {
    case EstimatorMode::Learned:
        return "learned";
    case EstimatorMode::Phi:
        return "phi";
    case EstimatorMode::Size:
        return "size";
    }
    return "?";
}

EstimatorMode ParseEstimatorMode(std::string_view s)
{
    for (auto m : { EstimatorMode::Learned, EstimatorMode::Phi, EstimatorMode::Size }) {
        if (ToString(m) == s) {
            return m;
        }
    }
    throw Error(ErrorCode::InvalidConfig, fmt::format("estimator must be learned, phi or size, got '{}'", s));
}

json ToJson(const BatchConfig& c)
{
    json j {
        { "dataset", c.dataset.string() },
        { "task", ToString(c.task) },
        { "estimator", ToString(c.mode) },
        { "runs", c.runs },
        { "seed", c.seed },
        { "pop_size", c.evolution.pop_size },
        { "generations", c.evolution.generations },
    };
    if (c.mode == EstimatorMode::Learned) {
        j["oracle"] = json { { "target", c.oracle.target }, { "noise_p", c.oracle.noise_p } };
    }
    return j;
}

namespace {

    void WriteJson(const std::filesystem::path& path, const json& j)
    {
        std::ofstream out(path);
        if (!out) {
            throw Error(ErrorCode::InvalidConfig, fmt::format("cannot write {}", path.string()));
        }
        out << j.dump(2) << '\n';
    }

} // namespace

std::vector<TradeoffFront> RunBatch(const BatchConfig& config)
{
    if (config.runs < 1) {
        throw Error(ErrorCode::InvalidConfig, "runs must be at least 1");
    }
    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec || !std::filesystem::is_directory(config.out_dir)) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("cannot create output directory {}", config.out_dir.string()));
    }
    WriteJson(config.out_dir / "config.json", ToJson(config));

    std::vector<TradeoffFront> fronts;
    for (int r = 0; r < config.runs; ++r) {
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(r);
        const auto dir = config.out_dir / fmt::format("run_{:03}", r);
        if (config.mode == EstimatorMode::Learned) {
            LiveConfig live;
            live.dataset = config.dataset.string();
            live.task = config.task;
            live.seed = seed;
            live.evolution = config.evolution;
            live.oracle = config.oracle;
            LiveRun run(live, dir);
            fronts.push_back(run.RunWithOracle(OracleUser(ParseScoreSource(config.oracle.target), config.oracle.noise_p)).front);
            continue;
        }
        auto data = LoadDataset(config.dataset, config.task, seed);
        ReferenceScorer scorer(config.mode == EstimatorMode::Phi ? ReferenceIndex::DefaultPhi() : ReferenceIndex::Size());
        auto front = RunEvolution(config.evolution, data, scorer, seed);
        std::filesystem::create_directories(dir, ec);
        auto run_config = ToJson(config);
        run_config["seed"] = seed;
        run_config["runs"] = 1;
        WriteJson(dir / "config.json", run_config);
        SaveFront(dir / "front.jsonl", front);
        fronts.push_back(std::move(front));
    }
    return fronts;
}

AggregateRow Aggregate(const std::vector<TradeoffFront>& fronts, const std::vector<int>& taus)
{
    if (fronts.empty()) {
        throw Error(ErrorCode::Data, "no fronts to aggregate");
    }
    AggregateRow row;
    row.runs = fronts.size();
    row.taus = taus;
    row.train.assign(taus.size(), 0.0);
    row.test.assign(taus.size(), 0.0);
    for (const auto& f : fronts) {
        row.mean_front_size += static_cast<double>(f.Size());
        for (std::size_t t = 0; t < taus.size(); ++t) {
            auto e = FrontAtPercentile(f, taus[t]);
            row.train[t] += e.train_error;
            row.test[t] += e.test_error;
        }
    }
    const double n = static_cast<double>(fronts.size());
    row.mean_front_size /= n;
    for (std::size_t t = 0; t < taus.size(); ++t) {
        row.train[t] /= n;
        row.test[t] /= n;
    }
    return row;
}

json ToJson(const AggregateRow& row, const std::string& label)
{
    json train = json::object();
    json test = json::object();
    for (std::size_t t = 0; t < row.taus.size(); ++t) {
        train[std::to_string(row.taus[t])] = row.train[t];
        test[std::to_string(row.taus[t])] = row.test[t];
    }
    return json { { "label", label }, { "runs", row.runs }, { "mean_front_size", row.mean_front_size }, { "train", train }, { "test", test } };
}

std::string FormatAggregateTable(const std::vector<std::pair<std::string, AggregateRow>>& rows)
{
    if (rows.empty()) {
        return {};
    }
    const auto& taus = rows.front().second.taus;
    std::string header = fmt::format("{:<12}{:>6}{:>8}", "", "runs", "size");
    std::string sub = fmt::format("{:<12}{:>6}{:>8}", "tau", "", "");
    for (const char* part : { "train", "test" }) {
        for (std::size_t t = 0; t < taus.size(); ++t) {
            header += fmt::format("{:>10}", t == 0 ? part : "");
            sub += fmt::format("{:>10}", taus[t]);
        }
    }
    std::string out = header + "\n" + sub + "\n";
    for (const auto& [label, row] : rows) {
        out += fmt::format("{:<12}{:>6}{:>8.1f}", label, row.runs, row.mean_front_size);
        for (double v : row.train) {
            out += fmt::format("{:>10.4g}", v);
        }
        for (double v : row.test) {
            out += fmt::format("{:>10.4g}", v);
        }
        out += "\n";
    }
    return out;
}

std::vector<ExampleRow> ExampleModels(const std::vector<TradeoffFront>& fronts, Rng& rng, const std::vector<int>& taus)
{
    if (fronts.empty()) {
        throw Error(ErrorCode::Data, "no fronts to sample from");
    }
    std::uniform_int_distribution<std::size_t> pick(0, fronts.size() - 1);
    const auto& front = fronts[pick(rng)];
    std::vector<ExampleRow> out;
    for (int tau : taus) {
        out.push_back(ExampleRow { tau, FrontAtPercentile(front, tau) });
    }
    return out;
}

std::string FormatExampleTable(const std::vector<ExampleRow>& rows)
{
    std::string out = fmt::format("{:>4}  {:>10}  {:>10}  {}\n", "tau", "train", "test", "model");
    for (const auto& r : rows) {
        out += fmt::format("{:>4}  {:>10.4g}  {:>10.4g}  {}\n", r.tau, r.entry.train_error, r.entry.test_error, r.entry.expression);
    }
    return out;
}

std::vector<std::filesystem::path> FindFrontFiles(const std::vector<std::filesystem::path>& roots)
{
    std::vector<std::filesystem::path> out;
    for (const auto& root : roots) {
        std::error_code ec;
        if (std::filesystem::is_regular_file(root, ec)) {
            out.push_back(root);
            continue;
        }
        if (!std::filesystem::is_directory(root, ec)) {
            throw Error(ErrorCode::Data, fmt::format("{} does not exist", root.string()));
        }
        std::vector<std::filesystem::path> found;
        for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
            if (e.is_regular_file() && e.path().filename() == "front.jsonl") {
                found.push_back(e.path());
            }
        }
        std::sort(found.begin(), found.end());
        out.insert(out.end(), found.begin(), found.end());
    }
    if (out.empty()) {
        throw Error(ErrorCode::Data, "no front.jsonl files found");
    }
    return out;
}

} // namespace steer
