#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "steer/active_loop.hpp"
#include "steer/front.hpp"

namespace httplib {
class Server;
}

namespace steer {

enum class SessionState { WarmingUp, Evolving, Finished, Surveying, Closed };
std::string_view ToString(SessionState s);
SessionState ParseSessionState(std::string_view s);

// Survey pair as stored server-side: which side the learned model was placed
// on never leaves the process until the session closes.
struct BlindPair {
    int pair_id = 0;
    SurveyPair pair;
    bool learned_left = false;
    std::optional<Choice> answer;

    const FrontEntry& Left() const { return learned_left ? pair.learned : pair.other; }
    const FrontEntry& Right() const { return learned_left ? pair.other : pair.learned; }
};

// Randomizes the presentation side of each pair with a fair coin.
std::vector<BlindPair> BlindSurvey(std::vector<SurveyPair> pairs, Rng& rng);

// Every front file (*.jsonl) below `dir`, in path order.
std::vector<TradeoffFront> LoadFrontPool(const std::filesystem::path& dir);

struct ServiceOptions {
    std::filesystem::path data_dir; // dataset names resolve to <data_dir>/<name>.csv
    std::filesystem::path runs_root; // one run directory per session
    std::optional<std::filesystem::path> phi_pool;
    std::optional<std::filesystem::path> size_pool;
    std::vector<int> survey_taus { 30, 50 };
};

// One live run plus its survey.
class Session {
public:
    Session(std::string id, LiveConfig config, std::shared_ptr<const std::vector<CompetitorPool>> pools, std::vector<int> taus,
        std::filesystem::path run_dir);

    const std::string& Id() const { return id_; }
    SessionState State() const;
    nlohmann::json Status() const;

    Query NextQuery();
    FeedbackAck SubmitFeedback(std::uint64_t query_id, Choice choice);
    // Throws Conflict until the run is finished, and until the survey is
    // complete when competitor pools are configured.
    TradeoffFront Front() const;
    // First call after the run finishes builds the survey and moves the
    // session to surveying. Throws Conflict before that or when no pools are
    // configured.
    nlohmann::json Survey();
    nlohmann::json AnswerSurvey(int pair_id, Choice choice);

    LiveRun& Run() { return *run_; }
    const LiveRun& Run() const { return *run_; }
    std::vector<nlohmann::json> Events() const { return run_->Events(); }

private:
    SessionState StateLocked() const;
    nlohmann::json SurveyLocked() const;

    std::string id_;
    std::shared_ptr<const std::vector<CompetitorPool>> pools_;
    std::vector<int> taus_;
    std::unique_ptr<LiveRun> run_;

    mutable std::mutex mutex_;
    std::optional<std::vector<BlindPair>> survey_;
    bool closed_ = false;
};

// What a session's event log says about it, including the survey layer.
struct ReplayedSession {
    ReplayedRun run;
    SessionState state = SessionState::WarmingUp;
    std::vector<BlindPair> survey;
};

ReplayedSession ReplaySession(std::span<const nlohmann::json> events);

class SessionManager {
public:
    explicit SessionManager(ServiceOptions options);

    // Validates the request (field-level ConfigError), resolves the dataset
    // and starts the run in the background.
    std::shared_ptr<Session> Create(const nlohmann::json& request);
    // Throws NotFound.
    std::shared_ptr<Session> Get(const std::string& id) const;
    std::vector<std::string> Ids() const;
    // Cancels every run and waits for them.
    void Shutdown();

    const ServiceOptions& Options() const { return options_; }

private:
    ServiceOptions options_;
    std::shared_ptr<const std::vector<CompetitorPool>> pools_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    Rng id_rng_;
};

// HTTP status for an error code.
int HttpStatus(ErrorCode code);

// Routes:
//   POST /runs                     create a run from a config object
//   GET  /runs/{id}                state, progress and telemetry
//   GET  /runs/{id}/query          next query (503 + Retry-After when none)
//   POST /runs/{id}/feedback       {"query_id": n, "choice": "left"|"right"}
//   GET  /runs/{id}/front          trade-off front
//   GET  /runs/{id}/survey         blinded survey pairs
//   POST /runs/{id}/survey         {"pair_id": n, "choice": "left"|"right"}
// Errors are {"error": code, "message": text} with code one of
// invalid_config, not_found, conflict, gone, no_query, runtime.
void RegisterRoutes(httplib::Server& server, SessionManager& manager);

} // namespace steer
