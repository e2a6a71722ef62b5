#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "steer/dataset.hpp"
#include "steer/estimator.hpp"
#include "steer/evolution.hpp"
#include "steer/front.hpp"
#include "steer/sim_user.hpp"

namespace steer {

struct TrackedModel {
    std::string expression;
    FeatureVector features;
    double sigma = 0.0;
};

// Bounded pool of the models the estimator is least sure about, ordered by
// sigma descending (ties: expression ascending).
class UncertaintyTracker {
public:
    static constexpr std::size_t kDefaultCapacity = 64;

    explicit UncertaintyTracker(std::size_t capacity = kDefaultCapacity);

    // Inserts when below capacity or when sigma beats the current minimum.
    // A repeated expression keeps the higher sigma. Negative sigma throws.
    void Observe(const std::string& expression, const FeatureVector& features, double sigma);

    // Removes and returns the most uncertain entry together with the most
    // uncertain remaining entry whose features differ from it (the runner-up
    // when all features coincide). Empty when fewer than two entries.
    std::optional<std::pair<TrackedModel, TrackedModel>> TakePair();

    std::size_t Size() const { return entries_.size(); }
    std::size_t Capacity() const { return capacity_; }
    const std::vector<TrackedModel>& Entries() const { return entries_; }

private:
    std::size_t capacity_;
    std::vector<TrackedModel> entries_;
};

struct QueryModel {
    std::string expression;
    FeatureVector features;
};

struct Query {
    std::uint64_t id = 0;
    QueryModel left;
    QueryModel right;
    int issued_at = 0; // generation open when the query was issued
};

nlohmann::json ToJson(const Query& q);
Query QueryFromJson(const nlohmann::json& j);

struct TelemetryRecord {
    int generation = 0;
    int feedback = 0;
    int mispredictions = 0;
    double mean_sigma = 0.0;
    int cumulative = 0;
    double normalized = 0.0; // mean_sigma / mean_sigma of generation 1
    std::uint64_t snapshot_version = 0;

    friend bool operator==(const TelemetryRecord&, const TelemetryRecord&) = default;
};

nlohmann::json ToJson(const TelemetryRecord& r);
TelemetryRecord TelemetryRecordFromJson(const nlohmann::json& j);

struct OracleSettings {
    std::string target = "size"; // size | phi | snapshot:<path>
    double noise_p = 0.0;
};

struct LiveConfig {
    std::string dataset; // path of the numeric table
    Task task = Task::Regression;
    std::uint64_t seed = 0;
    EvolutionConfig evolution {};
    std::string warmup_reference = "size";
    int warmup_models = 100;
    WarmupOptions warmup {};
    std::size_t tracker_capacity = UncertaintyTracker::kDefaultCapacity;
    int queries_per_generation = 4; // oracle mode only
    int mc_passes = kDefaultMcPasses;
    int pace_ms = 0; // pause after each generation (human mode)
    std::optional<OracleSettings> oracle;
};

struct FieldError {
    std::string field;
    std::string message;
};

// Reads a config object, reporting every offending field. Unknown keys are
// errors too. Throws ConfigError when the list is non-empty.
LiveConfig LiveConfigFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const LiveConfig& c);

class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<FieldError> fields);
    const std::vector<FieldError>& Fields() const { return fields_; }

private:
    std::vector<FieldError> fields_;
};

// Append-only, timestamped record of everything that changes a run. Every
// event carries seq (0, 1, ...), t (seconds since the log opened) and type.
class EventLog {
public:
    // With a path, each event is mirrored to a JSONL file, flushed per line.
    explicit EventLog(const std::optional<std::filesystem::path>& path = std::nullopt);

    void Append(std::string_view type, nlohmann::json payload = nlohmann::json::object());
    std::vector<nlohmann::json> Events() const;
    std::size_t Size() const;

private:
    mutable std::mutex mutex_;
    std::vector<nlohmann::json> events_;
    std::ofstream file_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<nlohmann::json> ReadEvents(const std::filesystem::path& path);

enum class RunState { WarmingUp, Evolving, Finished };
std::string_view ToString(RunState s);

// What an event log says about a run.
struct ReplayedRun {
    RunState state = RunState::WarmingUp;
    int generation = 0;
    int warmup_epochs = 0;
    std::vector<LabeledPair> pairs; // warm-up pairs, then answers in arrival order
    std::size_t warmup_pairs = 0;
    std::vector<Query> queries;
    std::vector<std::uint64_t> answered;
    std::vector<TelemetryRecord> telemetry;
    std::uint64_t snapshot_version = 0;
};

ReplayedRun Replay(std::span<const nlohmann::json> events);

struct FeedbackAck {
    std::uint64_t query_id = 0;
    bool mispredicted = false;
    int generation = 0;
    int cumulative = 0;
};

struct LiveResult {
    TradeoffFront front;
    std::vector<TelemetryRecord> telemetry;
    std::shared_ptr<const Mlp> estimator;
    int warmup_epochs = 0;
};

// One interactive run. Oracle mode executes everything on the caller's thread
// and is reproducible under a fixed seed. Human mode runs evolution and
// estimator training on two background threads; intake calls may come from
// any thread and never hold up the evolution.
class LiveRun {
public:
    // Loads config.dataset. Data and config problems throw before anything
    // runs.
    explicit LiveRun(LiveConfig config, std::optional<std::filesystem::path> run_dir = std::nullopt);
    LiveRun(LiveConfig config, std::shared_ptr<const Dataset> data, std::optional<std::filesystem::path> run_dir = std::nullopt);
    ~LiveRun();

    LiveRun(const LiveRun&) = delete;
    LiveRun& operator=(const LiveRun&) = delete;

    // Blocking: warm-up, then every generation followed by
    // config.queries_per_generation oracle-answered queries.
    LiveResult RunWithOracle(const OracleUser& oracle);

    // Human mode.
    void Start();
    void Wait();
    // Ends a human-mode run early; intake closes as if finished.
    void Cancel();

    // At most one query is outstanding: until it is answered every call
    // returns it again. Errors: Gone once finished, NoQuery while warming up
    // or while the tracker holds fewer than two models.
    Query NextQuery();
    // Errors: Gone once finished, NotFound for ids never issued, Conflict for
    // repeats.
    FeedbackAck SubmitFeedback(std::uint64_t query_id, Choice choice, PairSource source = PairSource::Human);

    RunState State() const;
    int Generation() const; // completed generations
    double Progress() const;
    std::vector<TelemetryRecord> Telemetry() const;
    int CumulativeFeedback() const;
    std::size_t BufferedPairs() const;
    std::size_t WarmupPairs() const;
    std::shared_ptr<const Mlp> Snapshot() const { return snapshot_.Acquire(); }
    // Throws Conflict before the run has finished.
    LiveResult Result() const;
    std::vector<nlohmann::json> Events() const { return log_.Events(); }
    // For layers above the run (survey answers) that share its log.
    void LogEvent(std::string_view type, nlohmann::json payload) { log_.Append(type, std::move(payload)); }
    const std::optional<std::filesystem::path>& RunDir() const { return run_dir_; }
    const LiveConfig& Config() const { return config_; }
    const Dataset& Data() const { return *data_; }

private:
    void Warmup();
    void InitializeEvolution();
    void EvolveOne(); // one generation, then telemetry and tracker updates
    void Finish();
    void TrainRound(Rng& rng);
    void EvolutionThread();
    void TrainerThread();
    Query IssueLocked();
    void WriteArtifacts();

    LiveConfig config_;
    std::shared_ptr<const Dataset> data_;
    std::optional<std::filesystem::path> run_dir_;
    EventLog log_;

    Rng evolution_rng_;
    Rng score_rng_;
    Rng train_rng_;
    std::unique_ptr<Evolution> evolution_;

    // Training side. The estimator is touched only by the thread that trains.
    Estimator estimator_;
    SnapshotCell snapshot_;
    int warmup_epochs_ = 0;

    // Intake side, guarded by mutex_.
    mutable std::mutex mutex_;
    std::condition_variable train_cv_;
    RunState state_ = RunState::WarmingUp;
    int completed_ = 0;
    UncertaintyTracker tracker_;
    std::map<std::uint64_t, Query> queries_;
    std::map<std::uint64_t, bool> answered_;
    std::optional<std::uint64_t> outstanding_;
    std::uint64_t next_id_ = 1;
    std::vector<LabeledPair> buffer_;
    std::size_t warmup_pairs_ = 0;
    int pending_rounds_ = 0;
    int open_feedback_ = 0;
    int open_mispredictions_ = 0;
    int cumulative_ = 0;
    std::vector<TelemetryRecord> telemetry_;
    bool intake_closed_ = false;
    std::optional<TradeoffFront> front_;
    std::string failure_;
    std::atomic<bool> cancelled_ { false };

    std::thread evolution_thread_;
    std::thread trainer_thread_;
};

} // namespace steer
