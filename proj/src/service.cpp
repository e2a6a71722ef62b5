#include "steer/service.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <httplib.h>

namespace steer {

using nlohmann::json;

namespace {

    constexpr std::uint64_t kSurveyStream = 8;

    const std::pair<SessionState, std::string_view> kStateNames[] = {
        { SessionState::WarmingUp, "warming_up" },
        { SessionState::Evolving, "evolving" },
        { SessionState::Finished, "finished" },
        { SessionState::Surveying, "surveying" },
        { SessionState::Closed, "closed" },
    };

    SessionState FromRunState(RunState s)
    {
        switch (s) {
        case RunState::WarmingUp:
            return SessionState::WarmingUp;
        case RunState::Evolving:
            return SessionState::Evolving;
        case RunState::Finished:
            return SessionState::Finished;
        }
        return SessionState::WarmingUp;
    }

    Competitor ParseCompetitor(std::string_view s)
    {
        if (s == "phi") {
            return Competitor::Phi;
        }
        if (s == "size") {
            return Competitor::Size;
        }
        throw Error(ErrorCode::Data, fmt::format("unknown competitor '{}'", s));
    }

    json StoredPair(const BlindPair& p)
    {
        return json {
            { "pair_id", p.pair_id },
            { "tau", p.pair.tau },
            { "competitor", ToString(p.pair.competitor) },
            { "learned", ToJson(p.pair.learned) },
            { "other", ToJson(p.pair.other) },
            { "accuracy_gap", p.pair.accuracy_gap },
            { "learned_left", p.learned_left },
        };
    }

    BlindPair StoredPairFromJson(const json& j)
    {
        BlindPair p;
        p.pair_id = j.at("pair_id").get<int>();
        p.pair.tau = j.at("tau").get<int>();
        p.pair.competitor = ParseCompetitor(j.at("competitor").get<std::string>());
        p.pair.learned = FrontEntryFromJson(j.at("learned"));
        p.pair.other = FrontEntryFromJson(j.at("other"));
        p.pair.accuracy_gap = j.at("accuracy_gap").get<double>();
        p.learned_left = j.at("learned_left").get<bool>();
        return p;
    }

} // namespace

std::string_view ToString(SessionState s)
{
    for (const auto& [state, name] : kStateNames) {
        if (state == s) {
            return name;
        }
    }
    return "?";
}

SessionState ParseSessionState(std::string_view s)
{
    for (const auto& [state, name] : kStateNames) {
        if (name == s) {
            return state;
        }
    }
    throw Error(ErrorCode::Data, fmt::format("unknown session state '{}'", s));
}

std::vector<BlindPair> BlindSurvey(std::vector<SurveyPair> pairs, Rng& rng)
{
    std::bernoulli_distribution coin(0.5);
    std::vector<BlindPair> out;
    int id = 1;
    for (auto& p : pairs) {
        BlindPair b;
        b.pair_id = id++;
        b.pair = std::move(p);
        b.learned_left = coin(rng);
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<TradeoffFront> LoadFrontPool(const std::filesystem::path& dir)
{
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("front pool {} is not a directory", dir.string()));
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() == "front.jsonl") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("no front.jsonl files below {}", dir.string()));
    }
    std::vector<TradeoffFront> out;
    for (const auto& f : files) {
        out.push_back(LoadFront(f));
    }
    return out;
}

// ---- session ---------------------------------------------------------------

Session::Session(std::string id, LiveConfig config, std::shared_ptr<const std::vector<CompetitorPool>> pools, std::vector<int> taus,
    std::filesystem::path run_dir)
    : id_(std::move(id))
    , pools_(std::move(pools))
    , taus_(std::move(taus))
    , run_(std::make_unique<LiveRun>(std::move(config), std::move(run_dir)))
{
    run_->Start();
}

SessionState Session::StateLocked() const
{
    if (closed_) {
        return SessionState::Closed;
    }
    if (survey_) {
        return SessionState::Surveying;
    }
    return FromRunState(run_->State());
}

SessionState Session::State() const
{
    std::lock_guard lock(mutex_);
    return StateLocked();
}

json Session::Status() const
{
    std::lock_guard lock(mutex_);
    json telemetry = json::array();
    for (const auto& r : run_->Telemetry()) {
        telemetry.push_back(ToJson(r));
    }
    json j {
        { "id", id_ },
        { "state", ToString(StateLocked()) },
        { "generation", run_->Generation() },
        { "generations", run_->Config().evolution.generations },
        { "progress", run_->Progress() },
        { "cumulative_feedback", run_->CumulativeFeedback() },
        { "telemetry", telemetry },
        { "survey_configured", !pools_->empty() },
    };
    if (survey_) {
        int answered = 0;
        for (const auto& p : *survey_) {
            answered += p.answer ? 1 : 0;
        }
        j["survey"] = json { { "pairs", survey_->size() }, { "answered", answered } };
    }
    return j;
}

Query Session::NextQuery()
{
    return run_->NextQuery();
}

FeedbackAck Session::SubmitFeedback(std::uint64_t query_id, Choice choice)
{
    return run_->SubmitFeedback(query_id, choice, PairSource::Human);
}

TradeoffFront Session::Front() const
{
    std::lock_guard lock(mutex_);
    if (run_->State() != RunState::Finished) {
        throw Error(ErrorCode::Conflict, "the run has not finished");
    }
    if (!pools_->empty() && !closed_) {
        throw Error(ErrorCode::Conflict, "the front is available once the survey is complete");
    }
    return run_->Result().front;
}

json Session::SurveyLocked() const
{
    json pairs = json::array();
    int remaining = 0;
    for (const auto& p : *survey_) {
        pairs.push_back(json {
            { "pair_id", p.pair_id },
            { "left", { { "expression", p.Left().expression } } },
            { "right", { { "expression", p.Right().expression } } },
            { "answered", p.answer.has_value() },
        });
        remaining += p.answer ? 0 : 1;
    }
    return json { { "pairs", pairs }, { "remaining", remaining } };
}

json Session::Survey()
{
    std::lock_guard lock(mutex_);
    if (run_->State() != RunState::Finished) {
        throw Error(ErrorCode::Conflict, "the survey opens when the run has finished");
    }
    if (pools_->empty()) {
        throw Error(ErrorCode::Conflict, "no survey is configured for this service");
    }
    if (!survey_) {
        // keyed by the random session id so that sessions sharing a run seed
        // still get independent placements
        Rng rng = SplitRng(std::stoull(id_, nullptr, 16), kSurveyStream);
        survey_ = BlindSurvey(BuildSurveyPairs(run_->Result().front, *pools_, taus_), rng);
        json stored = json::array();
        for (const auto& p : *survey_) {
            stored.push_back(StoredPair(p));
        }
        run_->LogEvent("survey_built", json { { "pairs", stored } });
        run_->LogEvent("session_state", json { { "state", ToString(SessionState::Surveying) } });
    }
    return SurveyLocked();
}

json Session::AnswerSurvey(int pair_id, Choice choice)
{
    std::lock_guard lock(mutex_);
    if (!survey_) {
        throw Error(ErrorCode::Conflict, "the survey has not started");
    }
    auto it = std::find_if(survey_->begin(), survey_->end(), [&](const BlindPair& p) { return p.pair_id == pair_id; });
    if (it == survey_->end()) {
        throw Error(ErrorCode::NotFound, fmt::format("unknown survey pair {}", pair_id));
    }
    if (it->answer) {
        throw Error(ErrorCode::Conflict, fmt::format("survey pair {} already answered", pair_id));
    }
    it->answer = choice;
    const bool picked_learned = (choice == Choice::Left) == it->learned_left;
    run_->LogEvent("survey_answer",
        json { { "pair_id", pair_id }, { "choice", ToString(choice) }, { "picked_learned", picked_learned },
            { "competitor", ToString(it->pair.competitor) }, { "tau", it->pair.tau } });
    int remaining = 0;
    for (const auto& p : *survey_) {
        remaining += p.answer ? 0 : 1;
    }
    if (remaining == 0) {
        closed_ = true;
        run_->LogEvent("session_state", json { { "state", ToString(SessionState::Closed) } });
    }
    return json { { "pair_id", pair_id }, { "remaining", remaining } };
}

ReplayedSession ReplaySession(std::span<const json> events)
{
    ReplayedSession s;
    s.run = Replay(events);
    s.state = FromRunState(s.run.state);
    for (const auto& e : events) {
        const auto type = e.at("type").get<std::string>();
        if (type == "survey_built") {
            s.survey.clear();
            for (const auto& p : e.at("pairs")) {
                s.survey.push_back(StoredPairFromJson(p));
            }
        } else if (type == "survey_answer") {
            const int id = e.at("pair_id").get<int>();
            auto it = std::find_if(s.survey.begin(), s.survey.end(), [&](const BlindPair& p) { return p.pair_id == id; });
            if (it == s.survey.end()) {
                throw Error(ErrorCode::Data, fmt::format("answer to unknown survey pair {}", id));
            }
            it->answer = ParseChoice(e.at("choice").get<std::string>());
        } else if (type == "session_state") {
            s.state = ParseSessionState(e.at("state").get<std::string>());
        }
    }
    return s;
}

// ---- manager ---------------------------------------------------------------

SessionManager::SessionManager(ServiceOptions options)
    : options_(std::move(options))
    , id_rng_(std::random_device {}())
{
    auto pools = std::make_shared<std::vector<CompetitorPool>>();
    if (options_.phi_pool) {
        pools->push_back(CompetitorPool { Competitor::Phi, LoadFrontPool(*options_.phi_pool) });
    }
    if (options_.size_pool) {
        pools->push_back(CompetitorPool { Competitor::Size, LoadFrontPool(*options_.size_pool) });
    }
    pools_ = std::move(pools);
    std::error_code ec;
    std::filesystem::create_directories(options_.runs_root, ec);
    if (!std::filesystem::is_directory(options_.runs_root)) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("cannot create {}", options_.runs_root.string()));
    }
}

std::shared_ptr<Session> SessionManager::Create(const json& request)
{
    std::vector<FieldError> errors;
    LiveConfig config;
    try {
        config = LiveConfigFromJson(request);
    } catch (const ConfigError& e) {
        errors = e.Fields();
    }
    if (request.is_object()) {
        if (request.contains("oracle") && !request.at("oracle").is_null()) {
            errors.push_back(FieldError { "oracle", "oracle sessions are run from the command line" });
        }
        if (!request.contains("dataset")) {
            errors.push_back(FieldError { "dataset", "is required" });
        } else if (request.at("dataset").is_string()) {
            std::filesystem::path path = config.dataset;
            if (!path.has_parent_path() && path.extension().empty()) {
                path = options_.data_dir / (config.dataset + ".csv");
            }
            std::error_code ec;
            if (!std::filesystem::is_regular_file(path, ec)) {
                errors.push_back(FieldError { "dataset", fmt::format("unknown dataset '{}'", config.dataset) });
            }
            config.dataset = path.string();
        }
    }
    if (!errors.empty()) {
        throw ConfigError(std::move(errors));
    }

    std::string id;
    std::lock_guard lock(mutex_);
    if (!request.contains("seed")) {
        config.seed = id_rng_() >> 1;
    }
    do {
        id = fmt::format("{:016x}", id_rng_());
    } while (sessions_.count(id));
    std::shared_ptr<Session> session;
    try {
        session = std::make_shared<Session>(id, config, pools_, options_.survey_taus, options_.runs_root / id);
    } catch (const Error& e) {
        if (e.Code() == ErrorCode::Data) {
            throw ConfigError({ FieldError { "dataset", e.what() } });
        }
        throw;
    }
    sessions_[id] = session;
    return session;
}

std::shared_ptr<Session> SessionManager::Get(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw Error(ErrorCode::NotFound, fmt::format("unknown run '{}'", id));
    }
    return it->second;
}

std::vector<std::string> SessionManager::Ids() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) {
        out.push_back(id);
    }
    return out;
}

void SessionManager::Shutdown()
{
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mutex_);
        for (const auto& [id, s] : sessions_) {
            all.push_back(s);
        }
    }
    for (auto& s : all) {
        s->Run().Cancel();
    }
    for (auto& s : all) {
        s->Run().Wait();
    }
}

// ---- http ------------------------------------------------------------------

int HttpStatus(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::Data:
    case ErrorCode::Structural:
        return 400;
    case ErrorCode::NotFound:
        return 404;
    case ErrorCode::Conflict:
        return 409;
    case ErrorCode::Gone:
        return 410;
    case ErrorCode::NoQuery:
        return 503;
    case ErrorCode::Runtime:
        return 500;
    }
    return 500;
}

namespace {

    std::string_view WireCode(ErrorCode code)
    {
        switch (code) {
        case ErrorCode::InvalidConfig:
        case ErrorCode::Data:
        case ErrorCode::Structural:
            return "invalid_config";
        case ErrorCode::NotFound:
            return "not_found";
        case ErrorCode::Conflict:
            return "conflict";
        case ErrorCode::Gone:
            return "gone";
        case ErrorCode::NoQuery:
            return "no_query";
        case ErrorCode::Runtime:
            return "runtime";
        }
        return "runtime";
    }

    void Reply(httplib::Response& res, int status, const json& body)
    {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    void ReplyError(httplib::Response& res, ErrorCode code, const std::string& message, json extra = json::object())
    {
        extra["error"] = WireCode(code);
        extra["message"] = message;
        if (code == ErrorCode::NoQuery) {
            res.set_header("Retry-After", "1");
            extra["retry_after_ms"] = 1000;
        }
        Reply(res, HttpStatus(code), extra);
    }

    json ParseBody(const httplib::Request& req)
    {
        try {
            return json::parse(req.body);
        } catch (const json::exception& e) {
            throw ConfigError({ FieldError { "", "request body is not valid JSON" } });
        }
    }

    // Reads {"<id_field>": integer >= 0, "choice": "left"|"right"}.
    std::pair<std::uint64_t, Choice> ParseAnswer(const json& body, const char* id_field)
    {
        std::vector<FieldError> errors;
        std::uint64_t id = 0;
        Choice choice = Choice::Left;
        if (!body.is_object()) {
            throw ConfigError({ FieldError { "", "request body must be an object" } });
        }
        if (!body.contains(id_field) || !body.at(id_field).is_number_integer() || body.at(id_field).get<long long>() < 0) {
            errors.push_back(FieldError { id_field, "must be a non-negative integer" });
        } else {
            id = body.at(id_field).get<std::uint64_t>();
        }
        if (!body.contains("choice") || !body.at("choice").is_string()) {
            errors.push_back(FieldError { "choice", "must be left or right" });
        } else {
            try {
                choice = ParseChoice(body.at("choice").get<std::string>());
            } catch (const Error&) {
                errors.push_back(FieldError { "choice", "must be left or right" });
            }
        }
        if (!errors.empty()) {
            throw ConfigError(std::move(errors));
        }
        return { id, choice };
    }

    template <typename Handler>
    httplib::Server::Handler Guard(Handler handler)
    {
        return [handler](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const ConfigError& e) {
                json fields = json::array();
                for (const auto& f : e.Fields()) {
                    fields.push_back(json { { "field", f.field }, { "message", f.message } });
                }
                ReplyError(res, ErrorCode::InvalidConfig, e.what(), json { { "fields", fields } });
            } catch (const Error& e) {
                ReplyError(res, e.Code(), e.what());
            } catch (const std::exception& e) {
                ReplyError(res, ErrorCode::Runtime, e.what());
            }
        };
    }

} // namespace

void RegisterRoutes(httplib::Server& server, SessionManager& manager)
{
    constexpr const char* kRun = R"(/runs/([0-9a-f]+))";
    const std::string run = kRun;

    server.Post("/runs", Guard([&manager](const httplib::Request& req, httplib::Response& res) {
        auto session = manager.Create(ParseBody(req));
        Reply(res, 201, json { { "id", session->Id() }, { "state", ToString(session->State()) } });
    }));

    server.Get(run, Guard([&manager](const httplib::Request& req, httplib::Response& res) {
        Reply(res, 200, manager.Get(req.matches[1])->Status());
    }));

    server.Get(run + "/query", Guard([&manager](const httplib::Request& req, httplib::Response& res) {
        auto session = manager.Get(req.matches[1]);
        try {
            auto q = session->NextQuery();
            Reply(res, 200,
                json { { "id", q.id }, { "left", { { "expression", q.left.expression } } }, { "right", { { "expression", q.right.expression } } },
                    { "issued_at", q.issued_at } });
        } catch (const Error& e) {
            if (e.Code() != ErrorCode::Gone) {
                throw;
            }
            // tell the client where to go next
            const bool survey = session->Status().at("survey_configured").get<bool>();
            ReplyError(res, ErrorCode::Gone, e.what(), json { { "next", survey ? "survey" : "front" } });
        }
    }));

    server.Post(run + "/feedback", Guard([&manager](const httplib::Request& req, httplib::Response& res) {
        auto session = manager.Get(req.matches[1]);
        auto [id, choice] = ParseAnswer(ParseBody(req), "query_id");
        auto ack = session->SubmitFeedback(id, choice);
        Reply(res, 200, json { { "query_id", ack.query_id }, { "accepted", true }, { "cumulative_feedback", ack.cumulative } });
    }));

    server.Get(run + "/front", Guard([&manager](const httplib::Request& req, httplib::Response& res) {
        auto front = manager.Get(req.matches[1])->Front();
        json entries = json::array();
        for (const auto& e : front.entries) {
            entries.push_back(ToJson(e));
        }
        Reply(res, 200, json { { "entries", entries } });
    }));

    server.Get(run + "/survey", Guard([&manager](const httplib::Request& req, httplib::Response& res) {
        Reply(res, 200, manager.Get(req.matches[1])->Survey());
    }));

    server.Post(run + "/survey", Guard([&manager](const httplib::Request& req, httplib::Response& res) {
        auto session = manager.Get(req.matches[1]);
        auto [id, choice] = ParseAnswer(ParseBody(req), "pair_id");
        Reply(res, 200, session->AnswerSurvey(static_cast<int>(id), choice));
    }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            const auto code = res.status == 404 ? "not_found" : res.status < 500 ? "invalid_config" : "runtime";
            res.set_content(json { { "error", code }, { "message", fmt::format("HTTP {}", res.status) } }.dump(), "application/json");
        }
    });
}

} // namespace steer
