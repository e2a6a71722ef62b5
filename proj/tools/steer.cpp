// Command-line driver: batch runs, oracle sessions, the toy experiment,
// estimator comparison, report tables and the HTTP service.

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "steer/report.hpp"
#include "steer/service.hpp"
#include "steer/sim_user.hpp"

#include <httplib.h>

using namespace steer;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kRuntime = 4 };

int ExitFor(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::Conflict:
        return kConfig;
    case ErrorCode::Data:
    case ErrorCode::Structural:
    case ErrorCode::NotFound:
        return kData;
    default:
        return kRuntime;
    }
}

// "boston" -> <data dir>/boston.csv when no such file exists locally.
std::filesystem::path ResolveDataset(const std::string& name)
{
    std::filesystem::path p = name;
    if (std::filesystem::exists(p)) {
        return p;
    }
    auto bundled = std::filesystem::path(STEER_DATA_DIR) / (name + ".csv");
    if (!p.has_parent_path() && p.extension().empty() && std::filesystem::exists(bundled)) {
        return bundled;
    }
    throw Error(ErrorCode::Data, fmt::format("dataset '{}' not found", name));
}

void WriteLines(const std::filesystem::path& path, const std::vector<json>& records)
{
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("cannot write {}", path.string()));
    }
    for (const auto& r : records) {
        out << r.dump() << '\n';
    }
}

void EnsureDir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("cannot create output directory {}", dir.string()));
    }
}

struct CommonOptions {
    std::string dataset = "boston";
    std::string task = "regression";
    std::size_t pop = 256;
    int gens = 50;
    std::uint64_t seed = 0;
    std::string oracle = "size";
    double noise_p = 0.0;
    std::string out;
};

void AddEvolutionFlags(CLI::App* cmd, CommonOptions& o)
{
    cmd->add_option("--dataset", o.dataset, "Numeric table (last column = label) or a bundled name: boston, german");
    cmd->add_option("--task", o.task, "regression | classification");
    cmd->add_option("--pop", o.pop, "Population size")->check(CLI::Range(4, 100000));
    cmd->add_option("--gens", o.gens, "Generations")->check(CLI::Range(1, 100000));
    cmd->add_option("--seed", o.seed, "Base seed");
    cmd->add_option("--oracle", o.oracle, "Simulated user: size | phi | snapshot:<path>");
    cmd->add_option("--noise-p", o.noise_p, "Probability that the simulated user flips an answer")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--out", o.out, "Output directory")->required();
}

int Batch(const CommonOptions& o, const std::string& estimator, int runs)
{
    BatchConfig c;
    c.dataset = ResolveDataset(o.dataset);
    c.task = ParseTask(o.task);
    c.mode = ParseEstimatorMode(estimator);
    c.runs = runs;
    c.seed = o.seed;
    c.evolution.pop_size = o.pop;
    c.evolution.generations = o.gens;
    c.oracle = OracleSettings { o.oracle, o.noise_p };
    c.out_dir = o.out;
    ParseScoreSource(o.oracle);

    auto fronts = RunBatch(c);
    auto row = Aggregate(fronts);
    const std::string label = std::string(ToString(c.mode));
    std::cout << FormatAggregateTable({ { label, row } });
    std::vector<json> records { ToJson(row, label) };
    WriteLines(c.out_dir / "summary.jsonl", records);
    return kOk;
}

int OracleSession(const CommonOptions& o)
{
    LiveConfig c;
    c.dataset = ResolveDataset(o.dataset).string();
    c.task = ParseTask(o.task);
    c.seed = o.seed;
    c.evolution.pop_size = o.pop;
    c.evolution.generations = o.gens;
    c.oracle = OracleSettings { o.oracle, o.noise_p };
    OracleUser user(ParseScoreSource(o.oracle), o.noise_p);
    LiveRun run(c, std::filesystem::path(o.out));
    auto result = run.RunWithOracle(user);
    std::cout << fmt::format("{:>4} {:>8} {:>8} {:>10} {:>10} {:>10}\n", "gen", "answers", "mispred", "cumulative", "sigma", "normalized");
    for (const auto& t : result.telemetry) {
        std::cout << fmt::format("{:>4} {:>8} {:>8} {:>10} {:>10.4f} {:>10.3f}\n", t.generation, t.feedback, t.mispredictions, t.cumulative,
            t.mean_sigma, t.normalized);
    }
    std::cout << fmt::format("front: {} models, warm-up {} epochs\n", result.front.Size(), result.warmup_epochs);
    return kOk;
}

int Toy(const std::string& out, ToyConfig config)
{
    EnsureDir(out);
    auto points = RunToyExperiment(config);
    auto summary = SummarizeCurves(points);
    std::vector<json> point_records;
    for (const auto& p : points) {
        point_records.push_back(ToJson(p));
    }
    std::vector<json> summary_records;
    for (const auto& s : summary) {
        summary_records.push_back(ToJson(s));
    }
    WriteLines(std::filesystem::path(out) / "curves.jsonl", point_records);
    WriteLines(std::filesystem::path(out) / "summary.jsonl", summary_records);
    std::cout << fmt::format("{:>9} {:>22} {:>22} {:>22}\n", "feedback", "uncertainty", "random", "classic");
    std::map<int, std::map<ToyMethod, const CurveSummary*>> by_feedback;
    for (const auto& s : summary) {
        by_feedback[s.feedback][s.method] = &s;
    }
    for (const auto& [feedback, methods] : by_feedback) {
        std::string line = fmt::format("{:>9}", feedback);
        for (auto m : { ToyMethod::RankingUncertainty, ToyMethod::RankingRandom, ToyMethod::Classic }) {
            auto it = methods.find(m);
            line += it == methods.end() ? fmt::format(" {:>22}", "-")
                                        : fmt::format(" {:>6.3f} [{:.3f}, {:.3f}]", it->second->median, it->second->q1, it->second->q3);
        }
        std::cout << line << '\n';
    }
    return kOk;
}

// One model per line: infix text, or front records with an "expression" field.
std::vector<RankedModel> ReadModels(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Data, fmt::format("cannot read {}", path.string()));
    }
    std::vector<RankedModel> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::string text = line;
        if (line.front() == '{') {
            text = json::parse(line).at("expression").get<std::string>();
        }
        auto tree = ParseInfix(text);
        out.push_back(RankedModel { ToInfix(tree), ExtractFeatures(tree) });
    }
    return out;
}

int Compare(const std::vector<std::string>& sources, const std::string& models_path, const std::string& out)
{
    std::vector<ScoreSource> parsed;
    for (const auto& s : sources) {
        // a bare checkpoint path is accepted as well
        parsed.push_back(s == "size" || s == "phi" || s.rfind("snapshot:", 0) == 0 ? ParseScoreSource(s) : ParseScoreSource("snapshot:" + s));
    }
    auto models = ReadModels(models_path);
    auto m = CompareEstimators(parsed, models);
    std::string header = fmt::format("{:>4}", "");
    for (std::size_t j = 0; j < sources.size(); ++j) {
        header += fmt::format(" {:>8}", j);
    }
    std::cout << header << '\n';
    json matrix = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::string line = fmt::format("{:>4}", i);
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            line += fmt::format(" {:>8.4f}", m(i, j));
            row.push_back(m(i, j));
        }
        std::cout << line << "   " << sources[static_cast<std::size_t>(i)] << '\n';
        matrix.push_back(row);
    }
    if (!out.empty()) {
        EnsureDir(out);
        WriteLines(std::filesystem::path(out) / "comparison.jsonl",
            { json { { "sources", sources }, { "models", models.size() }, { "footrule", matrix } } });
    }
    return kOk;
}

int Report(const std::vector<std::string>& dirs, std::uint64_t seed, const std::string& out)
{
    std::vector<std::filesystem::path> roots(dirs.begin(), dirs.end());
    std::vector<std::pair<std::string, AggregateRow>> rows;
    std::vector<json> records;
    for (const auto& root : roots) {
        std::vector<TradeoffFront> fronts;
        for (const auto& f : FindFrontFiles({ root })) {
            fronts.push_back(LoadFront(f));
        }
        auto label = root.filename().empty() ? root.parent_path().filename().string() : root.filename().string();
        rows.emplace_back(label, Aggregate(fronts));
        records.push_back(ToJson(rows.back().second, label));
        Rng rng(seed);
        auto examples = ExampleModels(fronts, rng);
        std::cout << "examples from " << label << ":\n" << FormatExampleTable(examples) << '\n';
        for (const auto& e : examples) {
            records.push_back(json { { "label", label }, { "tau", e.tau }, { "example", ToJson(e.entry) } });
        }
    }
    std::cout << FormatAggregateTable(rows);
    if (!out.empty()) {
        EnsureDir(out);
        WriteLines(std::filesystem::path(out) / "report.jsonl", records);
    }
    return kOk;
}

httplib::Server* g_server = nullptr;

int Serve(const std::string& host, int port, ServiceOptions options)
{
    SessionManager manager(std::move(options));
    httplib::Server server;
    RegisterRoutes(server, manager);
    g_server = &server;
    std::signal(SIGINT, [](int) { g_server->stop(); });
    std::signal(SIGTERM, [](int) { g_server->stop(); });
    std::cerr << fmt::format("listening on http://{}:{}\n", host, port);
    if (!server.listen(host, port)) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("cannot listen on {}:{}", host, port));
    }
    manager.Shutdown();
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app { "Interactive symbolic-model search with a learned interpretability estimator" };
    app.require_subcommand(1);

    CommonOptions batch_opts;
    std::string estimator = "size";
    int runs = 10;
    auto* batch = app.add_subcommand("batch", "Repeated runs with a fixed or oracle-learned interpretability scorer");
    AddEvolutionFlags(batch, batch_opts);
    batch->add_option("--estimator", estimator, "learned | phi | size");
    batch->add_option("--runs", runs, "Number of runs")->check(CLI::Range(1, 100000));

    CommonOptions session_opts;
    auto* session = app.add_subcommand("session", "One live run answered by a simulated user");
    AddEvolutionFlags(session, session_opts);

    ToyConfig toy_config;
    std::string toy_out;
    auto* toy = app.add_subcommand("toy", "Learning curves of the estimators against a hidden linear index");
    toy->add_option("--out", toy_out, "Output directory")->required();
    toy->add_option("--seeds", toy_config.seeds, "Repetitions")->check(CLI::Range(1, 100000));
    toy->add_option("--seed", toy_config.base_seed, "First repetition seed");
    toy->add_option("--max-answers", toy_config.max_answers, "Ranking answers per repetition")->check(CLI::Range(1, 100000));
    toy->add_option("--pool", toy_config.pool_models, "Models shown to the simulated user")->check(CLI::Range(2, 1000000));
    toy->add_option("--test", toy_config.test_models, "Held-out models for the footrule")->check(CLI::Range(2, 1000000));

    std::vector<std::string> sources;
    std::string models_path;
    std::string compare_out;
    auto* compare = app.add_subcommand("compare", "Pairwise footrule between estimators on a model list");
    compare->add_option("sources", sources, "size | phi | snapshot:<path> | <checkpoint path>")->required()->expected(2, -1);
    compare->add_option("--models", models_path, "Infix expressions or front records, one per line")->required();
    compare->add_option("--out", compare_out, "Directory for machine-readable output");

    std::vector<std::string> report_dirs;
    std::uint64_t report_seed = 0;
    std::string report_out;
    auto* report = app.add_subcommand("report", "Error summaries and example models from saved fronts");
    report->add_option("dirs", report_dirs, "Batch or run directories (one table row each)")->required()->expected(1, -1);
    report->add_option("--seed", report_seed, "Selects the front the examples come from");
    report->add_option("--out", report_out, "Directory for machine-readable output");

    std::string host = "127.0.0.1";
    int port = 8080;
    ServiceOptions service;
    service.data_dir = STEER_DATA_DIR;
    service.runs_root = "runs";
    std::string phi_pool, size_pool;
    auto* serve = app.add_subcommand("serve", "HTTP service for human sessions");
    serve->add_option("--host", host);
    serve->add_option("--port", port)->check(CLI::Range(0, 65535));
    serve->add_option("--data-dir", service.data_dir, "Where dataset names resolve");
    serve->add_option("--runs-root", service.runs_root, "Where session directories are written");
    serve->add_option("--phi-pool", phi_pool, "Precomputed phi fronts (enables the survey)");
    serve->add_option("--size-pool", size_pool, "Precomputed size fronts (enables the survey)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (batch->parsed()) {
            return Batch(batch_opts, estimator, runs);
        }
        if (session->parsed()) {
            return OracleSession(session_opts);
        }
        if (toy->parsed()) {
            return Toy(toy_out, toy_config);
        }
        if (compare->parsed()) {
            return Compare(sources, models_path, compare_out);
        }
        if (report->parsed()) {
            return Report(report_dirs, report_seed, report_out);
        }
        if (serve->parsed()) {
            if (!phi_pool.empty()) {
                service.phi_pool = phi_pool;
            }
            if (!size_pool.empty()) {
                service.size_pool = size_pool;
            }
            return Serve(host, port, service);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ExitFor(e.Code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}
