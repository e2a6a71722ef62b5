#include "steer/active_loop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "steer/variation.hpp"

namespace steer {

using nlohmann::json;

// ---- tracker ---------------------------------------------------------------

namespace {

    bool MoreUncertain(const TrackedModel& a, const TrackedModel& b)
    {
        if (a.sigma != b.sigma) {
            return a.sigma > b.sigma;
        }
        return a.expression < b.expression;
    }

} // namespace

UncertaintyTracker::UncertaintyTracker(std::size_t capacity)
    : capacity_(capacity)
{
    if (capacity < 2) {
        throw Error(ErrorCode::InvalidConfig, "tracker capacity must be at least 2");
    }
}

void UncertaintyTracker::Observe(const std::string& expression, const FeatureVector& features, double sigma)
{
    if (!(sigma >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("sigma must be non-negative, got {}", sigma));
    }
    auto same = std::find_if(entries_.begin(), entries_.end(), [&](const TrackedModel& m) { return m.expression == expression; });
    if (same != entries_.end()) {
        if (sigma <= same->sigma) {
            return;
        }
        entries_.erase(same);
    } else if (entries_.size() >= capacity_) {
        if (!MoreUncertain(TrackedModel { expression, features, sigma }, entries_.back())) {
            return;
        }
        entries_.pop_back();
    }
    TrackedModel m { expression, features, sigma };
    entries_.insert(std::upper_bound(entries_.begin(), entries_.end(), m, MoreUncertain), std::move(m));
}

std::optional<std::pair<TrackedModel, TrackedModel>> UncertaintyTracker::TakePair()
{
    if (entries_.size() < 2) {
        return std::nullopt;
    }
    auto partner = std::find_if(entries_.begin() + 1, entries_.end(), [&](const TrackedModel& m) { return m.features != entries_.front().features; });
    if (partner == entries_.end()) {
        partner = entries_.begin() + 1;
    }
    std::pair<TrackedModel, TrackedModel> out { entries_.front(), *partner };
    entries_.erase(partner);
    entries_.erase(entries_.begin());
    return out;
}

// ---- wire formats ----------------------------------------------------------

json ToJson(const Query& q)
{
    return json {
        { "id", q.id },
        { "left", { { "expression", q.left.expression }, { "features", ToJson(q.left.features) } } },
        { "right", { { "expression", q.right.expression }, { "features", ToJson(q.right.features) } } },
        { "issued_at", q.issued_at },
    };
}

Query QueryFromJson(const json& j)
{
    auto side = [](const json& s) { return QueryModel { s.at("expression").get<std::string>(), FeaturesFromJson(s.at("features")) }; };
    return Query { j.at("id").get<std::uint64_t>(), side(j.at("left")), side(j.at("right")), j.at("issued_at").get<int>() };
}

json ToJson(const TelemetryRecord& r)
{
    return json {
        { "generation", r.generation },
        { "feedback", r.feedback },
        { "mispredictions", r.mispredictions },
        { "mean_sigma", r.mean_sigma },
        { "cumulative", r.cumulative },
        { "normalized", r.normalized },
        { "snapshot_version", r.snapshot_version },
    };
}

TelemetryRecord TelemetryRecordFromJson(const json& j)
{
    TelemetryRecord r;
    r.generation = j.at("generation").get<int>();
    r.feedback = j.at("feedback").get<int>();
    r.mispredictions = j.at("mispredictions").get<int>();
    r.mean_sigma = j.at("mean_sigma").get<double>();
    r.cumulative = j.at("cumulative").get<int>();
    r.normalized = j.at("normalized").get<double>();
    r.snapshot_version = j.at("snapshot_version").get<std::uint64_t>();
    return r;
}

// ---- config ----------------------------------------------------------------

ConfigError::ConfigError(std::vector<FieldError> fields)
    : Error(ErrorCode::InvalidConfig,
        [&] {
            std::string msg = "invalid config:";
            for (const auto& f : fields) {
                msg += fmt::format(" {}: {};", f.field, f.message);
            }
            return msg;
        }())
    , fields_(std::move(fields))
{
}

namespace {

    class FieldReader {
    public:
        explicit FieldReader(const json& j)
            : j_(j)
        {
        }

        template <typename T>
        void Int(const char* key, T& out, long long lo, long long hi)
        {
            seen_.push_back(key);
            if (!j_.contains(key)) {
                return;
            }
            const auto& v = j_.at(key);
            if (!v.is_number_integer()) {
                Fail(key, "must be an integer");
                return;
            }
            long long x = v.get<long long>();
            if (x < lo || x > hi) {
                Fail(key, fmt::format("must be in [{}, {}]", lo, hi));
                return;
            }
            out = static_cast<T>(x);
        }

        void Real(const char* key, double& out, double lo, double hi)
        {
            seen_.push_back(key);
            if (!j_.contains(key)) {
                return;
            }
            const auto& v = j_.at(key);
            if (!v.is_number() || !(v.get<double>() >= lo && v.get<double>() <= hi)) {
                Fail(key, fmt::format("must be a number in [{}, {}]", lo, hi));
                return;
            }
            out = v.get<double>();
        }

        void String(const char* key, std::string& out, bool required = false)
        {
            seen_.push_back(key);
            if (!j_.contains(key)) {
                if (required) {
                    Fail(key, "is required");
                }
                return;
            }
            if (!j_.at(key).is_string()) {
                Fail(key, "must be a string");
                return;
            }
            out = j_.at(key).get<std::string>();
        }

        void Seen(const char* key) { seen_.push_back(key); }

        void Fail(std::string field, std::string message) { errors.push_back(FieldError { std::move(field), std::move(message) }); }

        void RejectUnknown(const std::string& prefix = {})
        {
            for (const auto& [k, v] : j_.items()) {
                if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) {
                    Fail(prefix + k, "unknown field");
                }
            }
        }

        std::vector<FieldError> errors;

    private:
        const json& j_;
        std::vector<std::string> seen_;
    };

} // namespace

LiveConfig LiveConfigFromJson(const json& j)
{
    if (!j.is_object()) {
        throw ConfigError({ FieldError { "", "config must be a JSON object" } });
    }
    LiveConfig c;
    FieldReader r(j);
    r.String("dataset", c.dataset);
    std::string task = std::string(ToString(c.task));
    r.String("task", task);
    try {
        c.task = ParseTask(task);
    } catch (const Error& e) {
        r.Fail("task", "must be regression or classification");
    }
    r.Int("seed", c.seed, 0, std::numeric_limits<long long>::max());
    r.Int("pop_size", c.evolution.pop_size, 4, 100000);
    r.Int("generations", c.evolution.generations, 1, 100000);
    r.Int("init_min_depth", c.evolution.init_min_depth, 1, 8);
    r.Int("init_max_depth", c.evolution.init_max_depth, 1, 8);
    if (c.evolution.init_min_depth > c.evolution.init_max_depth) {
        r.Fail("init_max_depth", "must not be below init_min_depth");
    }
    r.String("warmup_reference", c.warmup_reference);
    if (c.warmup_reference != "size" && c.warmup_reference != "phi") {
        r.Fail("warmup_reference", "must be size or phi");
    }
    r.Int("warmup_models", c.warmup_models, 2, 100000);
    r.Int("warmup_epoch_cap", c.warmup.epoch_cap, 1, 1000);
    r.Int("tracker_capacity", c.tracker_capacity, 2, 100000);
    r.Int("queries_per_generation", c.queries_per_generation, 0, 10000);
    r.Int("mc_passes", c.mc_passes, 2, 10000);
    c.warmup.mc_passes = c.mc_passes;
    r.Int("pace_ms", c.pace_ms, 0, 600000);
    r.Seen("oracle");
    if (j.contains("oracle") && !j.at("oracle").is_null()) {
        const auto& o = j.at("oracle");
        if (!o.is_object()) {
            r.Fail("oracle", "must be an object or null");
        } else {
            OracleSettings s;
            FieldReader orr(o);
            orr.String("target", s.target);
            orr.Real("noise_p", s.noise_p, 0.0, 1.0);
            orr.RejectUnknown("oracle.");
            if (s.target != "size" && s.target != "phi" && s.target.rfind("snapshot:", 0) != 0) {
                orr.Fail("oracle.target", "must be size, phi or snapshot:<path>");
            }
            for (auto& e : orr.errors) {
                if (e.field.rfind("oracle.", 0) != 0) {
                    e.field = "oracle." + e.field;
                }
                r.errors.push_back(e);
            }
            c.oracle = s;
        }
    }
    r.RejectUnknown();
    if (!r.errors.empty()) {
        throw ConfigError(std::move(r.errors));
    }
    return c;
}

json ToJson(const LiveConfig& c)
{
    json j {
        { "dataset", c.dataset },
        { "task", ToString(c.task) },
        { "seed", c.seed },
        { "pop_size", c.evolution.pop_size },
        { "generations", c.evolution.generations },
        { "init_min_depth", c.evolution.init_min_depth },
        { "init_max_depth", c.evolution.init_max_depth },
        { "warmup_reference", c.warmup_reference },
        { "warmup_models", c.warmup_models },
        { "warmup_epoch_cap", c.warmup.epoch_cap },
        { "tracker_capacity", c.tracker_capacity },
        { "queries_per_generation", c.queries_per_generation },
        { "mc_passes", c.mc_passes },
        { "pace_ms", c.pace_ms },
    };
    j["oracle"] = c.oracle ? json { { "target", c.oracle->target }, { "noise_p", c.oracle->noise_p } } : json(nullptr);
    return j;
}

// ---- event log -------------------------------------------------------------

EventLog::EventLog(const std::optional<std::filesystem::path>& path)
{
    if (path) {
        file_.open(*path, std::ios::trunc);
        if (!file_) {
            throw Error(ErrorCode::InvalidConfig, fmt::format("cannot write event log {}", path->string()));
        }
    }
}

void EventLog::Append(std::string_view type, json payload)
{
    std::lock_guard lock(mutex_);
    payload["seq"] = events_.size();
    payload["t"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    payload["type"] = type;
    if (file_.is_open()) {
        file_ << payload.dump() << '\n';
        file_.flush();
    }
    events_.push_back(std::move(payload));
}

std::vector<json> EventLog::Events() const
{
    std::lock_guard lock(mutex_);
    return events_;
}

std::size_t EventLog::Size() const
{
    std::lock_guard lock(mutex_);
    return events_.size();
}

std::vector<json> ReadEvents(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Data, fmt::format("cannot read event log {}", path.string()));
    }
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Data, fmt::format("bad event log line {}: {}", out.size() + 1, e.what()));
        }
    }
    return out;
}

std::string_view ToString(RunState s)
{
    switch (s) {
    case RunState::WarmingUp:
        return "warming_up";
    case RunState::Evolving:
        return "evolving";
    case RunState::Finished:
        return "finished";
    }
    return "?";
}

namespace {

    RunState ParseRunState(const std::string& s)
    {
        for (auto st : { RunState::WarmingUp, RunState::Evolving, RunState::Finished }) {
            if (ToString(st) == s) {
                return st;
            }
        }
        throw Error(ErrorCode::Data, fmt::format("unknown run state '{}'", s));
    }

    LabeledPair PairFor(const Query& q, Choice c, PairSource source)
    {
        return LabeledPair { q.left.features, q.right.features, LabelFor(c), source };
    }

} // namespace

ReplayedRun Replay(std::span<const json> events)
{
    ReplayedRun run;
    std::map<std::uint64_t, Query> queries;
    std::size_t expected = 0;
    for (const auto& e : events) {
        if (e.at("seq").get<std::size_t>() != expected++) {
            throw Error(ErrorCode::Data, "event log has a gap or is out of order");
        }
        const auto type = e.at("type").get<std::string>();
        if (type == "warmup") {
            run.warmup_epochs = e.at("epochs").get<int>();
            for (const auto& p : e.at("pairs")) {
                run.pairs.push_back(LabeledPairFromJson(p));
            }
            run.warmup_pairs = run.pairs.size();
            run.snapshot_version = e.at("snapshot_version").get<std::uint64_t>();
        } else if (type == "state") {
            run.state = ParseRunState(e.at("state").get<std::string>());
        } else if (type == "query") {
            auto q = QueryFromJson(e.at("query"));
            queries[q.id] = q;
            run.queries.push_back(q);
        } else if (type == "answer") {
            auto id = e.at("query_id").get<std::uint64_t>();
            auto it = queries.find(id);
            if (it == queries.end()) {
                throw Error(ErrorCode::Data, fmt::format("answer to unknown query {}", id));
            }
            run.pairs.push_back(PairFor(it->second, ParseChoice(e.at("choice").get<std::string>()),
                ParsePairSource(e.at("source").get<std::string>())));
            run.answered.push_back(id);
        } else if (type == "snapshot") {
            run.snapshot_version = e.at("version").get<std::uint64_t>();
        } else if (type == "generation") {
            run.telemetry.push_back(TelemetryRecordFromJson(e.at("telemetry")));
            run.generation = run.telemetry.back().generation;
        }
    }
    return run;
}

// ---- live run --------------------------------------------------------------

namespace {

    std::shared_ptr<const Dataset> LoadFor(const LiveConfig& config)
    {
        if (config.dataset.empty()) {
            throw Error(ErrorCode::InvalidConfig, "dataset path is required");
        }
        return std::make_shared<const Dataset>(LoadDataset(config.dataset, config.task, config.seed));
    }

    std::optional<std::filesystem::path> Prepare(const std::optional<std::filesystem::path>& dir)
    {
        if (dir) {
            std::error_code ec;
            std::filesystem::create_directories(*dir, ec);
            if (ec || !std::filesystem::is_directory(*dir)) {
                throw Error(ErrorCode::InvalidConfig, fmt::format("cannot create run directory {}", dir->string()));
            }
        }
        return dir;
    }

    // Per-run generator streams.
    enum Stream : std::uint64_t {
        kEvolution = 1,
        kScoring = 2,
        kNetInit = 3,
        kWarmupTraining = 4,
        kWarmupModels = 5,
        kOracle = 6,
        kTraining = 7,
    };

} // namespace

LiveRun::LiveRun(LiveConfig config, std::optional<std::filesystem::path> run_dir)
    : LiveRun(config, LoadFor(config), std::move(run_dir))
{
}

LiveRun::LiveRun(LiveConfig config, std::shared_ptr<const Dataset> data, std::optional<std::filesystem::path> run_dir)
    : config_(std::move(config))
    , data_(std::move(data))
    , run_dir_(Prepare(run_dir))
    , log_(run_dir_ ? std::optional(*run_dir_ / "events.jsonl") : std::nullopt)
    , evolution_rng_(SplitRng(config_.seed, kEvolution))
    , score_rng_(SplitRng(config_.seed, kScoring))
    , train_rng_(SplitRng(config_.seed, kTraining))
    , tracker_(config_.tracker_capacity)
{
    if (!data_) {
        throw Error(ErrorCode::InvalidConfig, "no dataset");
    }
    if (config_.evolution.pop_size < 2 || config_.evolution.generations < 1) {
        throw Error(ErrorCode::InvalidConfig, "population must hold at least 2 models and run at least 1 generation");
    }
    ReferenceIndex::Parse(config_.warmup_reference);
    config_.warmup.mc_passes = config_.mc_passes;
    if (run_dir_) {
        std::ofstream out(*run_dir_ / "config.json");
        out << ToJson(config_).dump(2) << '\n';
    }
    log_.Append("run_started", json { { "config", ToJson(config_) }, { "dataset_rows", data_->Rows() } });
}

LiveRun::~LiveRun()
{
    Cancel();
    Wait();
}

void LiveRun::Warmup()
{
    Rng init_rng = SplitRng(config_.seed, kNetInit);
    Rng model_rng = SplitRng(config_.seed, kWarmupModels);
    Rng warm_rng = SplitRng(config_.seed, kWarmupTraining);
    estimator_ = Estimator::Ranking(init_rng);
    std::vector<FeatureVector> models;
    TreeShape shape { data_->Dims(), 1, 4 };
    for (const auto& t : RampedHalfAndHalf(static_cast<std::size_t>(config_.warmup_models), shape, model_rng)) {
        models.push_back(ExtractFeatures(t));
    }
    auto result = WarmupRanking(estimator_, ReferenceIndex::Parse(config_.warmup_reference), models, warm_rng, config_.warmup);
    warmup_epochs_ = result.epochs;
    auto snap = estimator_.Snapshot();
    snapshot_.Publish(snap);
    json pairs = json::array();
    for (const auto& p : result.last_epoch_pairs) {
        pairs.push_back(ToJson(p));
    }
    {
        std::lock_guard lock(mutex_);
        buffer_ = result.last_epoch_pairs;
        warmup_pairs_ = buffer_.size();
    }
    log_.Append("warmup",
        json { { "epochs", result.epochs }, { "mean_sigma", result.mean_sigma }, { "pairs", pairs }, { "snapshot_version", snap->Version() } });
}

void LiveRun::InitializeEvolution()
{
    evolution_ = std::make_unique<Evolution>(config_.evolution, *data_, evolution_rng_);
    NetScorer scorer(snapshot_.Acquire(), config_.mc_passes);
    evolution_->Initialize(scorer, score_rng_);
    std::lock_guard lock(mutex_);
    for (const auto& ind : evolution_->Population()) {
        if (!ind.is_duplicate) {
            tracker_.Observe(ToInfix(ind.tree), ind.features, ind.psi_sigma);
        }
    }
    state_ = RunState::Evolving;
    log_.Append("state", json { { "state", ToString(state_) } });
}

void LiveRun::EvolveOne()
{
    NetScorer scorer(snapshot_.Acquire(), config_.mc_passes);
    evolution_->Step(scorer, score_rng_);
    const auto& pop = evolution_->Population();
    double sigma_sum = 0.0;
    for (const auto& ind : pop) {
        sigma_sum += ind.psi_sigma;
    }

    std::lock_guard lock(mutex_);
    for (const auto& ind : pop) {
        if (!ind.is_duplicate) {
            tracker_.Observe(ToInfix(ind.tree), ind.features, ind.psi_sigma);
        }
    }
    TelemetryRecord rec;
    rec.generation = evolution_->Generation();
    rec.feedback = open_feedback_;
    rec.mispredictions = open_mispredictions_;
    rec.mean_sigma = sigma_sum / static_cast<double>(pop.size());
    rec.cumulative = cumulative_;
    const double base = telemetry_.empty() ? rec.mean_sigma : telemetry_.front().mean_sigma;
    rec.normalized = base > 0.0 ? rec.mean_sigma / base : 1.0;
    rec.snapshot_version = scorer.Version();
    telemetry_.push_back(rec);
    open_feedback_ = 0;
    open_mispredictions_ = 0;
    completed_ = rec.generation;
    log_.Append("generation", json { { "telemetry", ToJson(rec) } });
}

void LiveRun::Finish()
{
    TradeoffFront front;
    if (evolution_ && !evolution_->Population().empty()) {
        front = evolution_->Front();
    }
    {
        std::lock_guard lock(mutex_);
        front_ = std::move(front);
        state_ = RunState::Finished;
    }
    WriteArtifacts();
    log_.Append("state", json { { "state", ToString(RunState::Finished) } });
    log_.Append("finished", json { { "generations", completed_ }, { "front_size", front_->Size() }, { "cancelled", cancelled_.load() } });
}

void LiveRun::WriteArtifacts()
{
    if (!run_dir_) {
        return;
    }
    SaveFront(*run_dir_ / "front.jsonl", *front_);
    snapshot_.Acquire()->Save(*run_dir_ / "estimator.json");
    std::ofstream out(*run_dir_ / "telemetry.jsonl");
    for (const auto& r : Telemetry()) {
        out << ToJson(r).dump() << '\n';
    }
}

void LiveRun::TrainRound(Rng& rng)
{
    std::vector<LabeledPair> pairs;
    {
        std::lock_guard lock(mutex_);
        if (pending_rounds_ == 0) {
            return;
        }
        --pending_rounds_;
        pairs = buffer_;
    }
    TrainEpoch(estimator_, pairs, rng);
    auto snap = estimator_.Snapshot();
    snapshot_.Publish(snap);
    log_.Append("snapshot", json { { "version", snap->Version() }, { "pairs", pairs.size() } });
}

Query LiveRun::IssueLocked()
{
    if (intake_closed_) {
        throw Error(ErrorCode::Gone, "run has finished");
    }
    if (outstanding_) {
        return queries_.at(*outstanding_);
    }
    if (state_ == RunState::WarmingUp) {
        throw Error(ErrorCode::NoQuery, "estimator is warming up");
    }
    auto pair = tracker_.TakePair();
    if (!pair) {
        throw Error(ErrorCode::NoQuery, "not enough tracked models yet");
    }
    Query q { next_id_++, QueryModel { pair->first.expression, pair->first.features },
        QueryModel { pair->second.expression, pair->second.features }, completed_ + 1 };
    queries_[q.id] = q;
    outstanding_ = q.id;
    log_.Append("query", json { { "query", ToJson(q) } });
    return q;
}

Query LiveRun::NextQuery()
{
    std::lock_guard lock(mutex_);
    return IssueLocked();
}

FeedbackAck LiveRun::SubmitFeedback(std::uint64_t query_id, Choice choice, PairSource source)
{
    auto snap = snapshot_.Acquire();
    std::lock_guard lock(mutex_);
    if (intake_closed_) {
        throw Error(ErrorCode::Gone, "run has finished");
    }
    auto it = queries_.find(query_id);
    if (it == queries_.end()) {
        throw Error(ErrorCode::NotFound, fmt::format("unknown query {}", query_id));
    }
    if (answered_.count(query_id)) {
        throw Error(ErrorCode::Conflict, fmt::format("query {} already answered", query_id));
    }
    const Query& q = it->second;
    const double psi_left = snap->Predict(EncodeFeatures(q.left.features));
    const double psi_right = snap->Predict(EncodeFeatures(q.right.features));
    const bool mispredicted = choice == Choice::Left ? psi_left < psi_right : psi_right < psi_left;

    answered_[query_id] = true;
    if (outstanding_ == query_id) {
        outstanding_.reset();
    }
    buffer_.push_back(PairFor(q, choice, source));
    ++open_feedback_;
    open_mispredictions_ += mispredicted ? 1 : 0;
    ++cumulative_;
    ++pending_rounds_;
    FeedbackAck ack { query_id, mispredicted, completed_ + 1, cumulative_ };
    log_.Append("answer",
        json { { "query_id", query_id }, { "choice", ToString(choice) }, { "label", LabelFor(choice) }, { "source", ToString(source) },
            { "mispredicted", mispredicted }, { "generation", ack.generation }, { "cumulative", cumulative_ },
            { "snapshot_version", snap->Version() } });
    train_cv_.notify_one();
    return ack;
}

LiveResult LiveRun::RunWithOracle(const OracleUser& oracle)
{
    if (evolution_thread_.joinable() || evolution_) {
        throw Error(ErrorCode::Conflict, "run already started");
    }
    Rng oracle_rng = SplitRng(config_.seed, kOracle);
    Warmup();
    InitializeEvolution();
    while (!evolution_->Finished()) {
        for (int i = 0; i < config_.queries_per_generation; ++i) {
            Query q;
            try {
                q = NextQuery();
            } catch (const Error& e) {
                if (e.Code() == ErrorCode::NoQuery) {
                    break;
                }
                throw;
            }
            SubmitFeedback(q.id, oracle.Answer(q.left.features, q.right.features, oracle_rng), PairSource::Oracle);
            TrainRound(train_rng_);
        }
        EvolveOne();
    }
    {
        std::lock_guard lock(mutex_);
        intake_closed_ = true;
    }
    Finish();
    return Result();
}

void LiveRun::Start()
{
    if (evolution_thread_.joinable() || evolution_) {
        throw Error(ErrorCode::Conflict, "run already started");
    }
    trainer_thread_ = std::thread([this] { TrainerThread(); });
    evolution_thread_ = std::thread([this] { EvolutionThread(); });
}

void LiveRun::EvolutionThread()
{
    try {
        Warmup();
        if (!cancelled_) {
            InitializeEvolution();
        }
        while (evolution_ && !evolution_->Finished() && !cancelled_) {
            EvolveOne();
            if (config_.pace_ms > 0 && !evolution_->Finished()) {
                std::unique_lock lock(mutex_);
                train_cv_.wait_for(lock, std::chrono::milliseconds(config_.pace_ms), [this] { return cancelled_.load(); });
            }
        }
    } catch (const std::exception& e) {
        failure_ = e.what();
        log_.Append("error", json { { "message", e.what() } });
    }
    {
        std::lock_guard lock(mutex_);
        intake_closed_ = true;
    }
    train_cv_.notify_all();
    trainer_thread_.join();
    Finish();
}

void LiveRun::TrainerThread()
{
    for (;;) {
        {
            std::unique_lock lock(mutex_);
            train_cv_.wait(lock, [this] { return pending_rounds_ > 0 || intake_closed_; });
            if (pending_rounds_ == 0) {
                return;
            }
        }
        TrainRound(train_rng_);
    }
}

void LiveRun::Wait()
{
    if (evolution_thread_.joinable()) {
        evolution_thread_.join();
    }
}

void LiveRun::Cancel()
{
    cancelled_ = true;
    train_cv_.notify_all();
}

RunState LiveRun::State() const
{
    std::lock_guard lock(mutex_);
    return state_;
}

int LiveRun::Generation() const
{
    std::lock_guard lock(mutex_);
    return completed_;
}

double LiveRun::Progress() const
{
    return static_cast<double>(Generation()) / static_cast<double>(config_.evolution.generations);
}

std::vector<TelemetryRecord> LiveRun::Telemetry() const
{
    std::lock_guard lock(mutex_);
    return telemetry_;
}

int LiveRun::CumulativeFeedback() const
{
    std::lock_guard lock(mutex_);
    return cumulative_;
}

std::size_t LiveRun::BufferedPairs() const
{
    std::lock_guard lock(mutex_);
    return buffer_.size();
}

std::size_t LiveRun::WarmupPairs() const
{
    std::lock_guard lock(mutex_);
    return warmup_pairs_;
}

LiveResult LiveRun::Result() const
{
    std::lock_guard lock(mutex_);
    if (state_ != RunState::Finished) {
        throw Error(ErrorCode::Conflict, "run has not finished");
    }
    if (!failure_.empty()) {
        throw Error(ErrorCode::Runtime, failure_);
    }
    return LiveResult { *front_, telemetry_, snapshot_.Acquire(), warmup_epochs_ };
}

} // namespace steer
