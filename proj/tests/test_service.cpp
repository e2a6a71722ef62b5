#include <doctest.h>

#include <set>
#include <thread>

#include <fmt/format.h>

#include "helpers.hpp"
#include "steer/service.hpp"

// after Eigen: a resolver header pulled in here defines a _res macro
#include <httplib.h>

using namespace steer;
using nlohmann::json;
using steer::testing::DataFile;
using steer::testing::ScratchDir;

namespace {

// Precomputed competitor fronts, as the batch command lays them out.
std::filesystem::path MakePool(const std::string& name, const ReferenceIndex& index, int runs)
{
    auto dir = ScratchDir(name);
    auto data = LoadDataset(DataFile("boston.csv"), Task::Regression, 0);
    ReferenceScorer scorer(index);
    EvolutionConfig config;
    config.pop_size = 32;
    config.generations = 3;
    for (int r = 0; r < runs; ++r) {
        auto run_dir = dir / fmt::format("run_{:03}", r);
        std::filesystem::create_directories(run_dir);
        SaveFront(run_dir / "front.jsonl", RunEvolution(config, data, scorer, static_cast<std::uint64_t>(r)));
    }
    return dir;
}

class TestServer {
public:
    explicit TestServer(ServiceOptions options)
        : manager(std::move(options))
    {
        RegisterRoutes(server_, manager);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~TestServer()
    {
        server_.stop();
        thread_.join();
        manager.Shutdown();
    }

    httplib::Client Client() const
    {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(30, 0);
        return c;
    }

    SessionManager manager;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

json Body(const httplib::Result& r)
{
    REQUIRE(r);
    return json::parse(r->body);
}

json SmallRun()
{
    return json { { "dataset", "boston" }, { "seed", 4 }, { "pop_size", 32 }, { "generations", 6 }, { "pace_ms", 30 } };
}

const std::vector<std::string> kStateOrder { "warming_up", "evolving", "finished", "surveying", "closed" };

int StateIndex(const std::string& s)
{
    auto it = std::find(kStateOrder.begin(), kStateOrder.end(), s);
    REQUIRE(it != kStateOrder.end());
    return static_cast<int>(it - kStateOrder.begin());
}

} // namespace

TEST_CASE("error codes map onto HTTP statuses")
{
    CHECK(HttpStatus(ErrorCode::InvalidConfig) == 400);
    CHECK(HttpStatus(ErrorCode::NotFound) == 404);
    CHECK(HttpStatus(ErrorCode::Conflict) == 409);
    CHECK(HttpStatus(ErrorCode::Gone) == 410);
    CHECK(HttpStatus(ErrorCode::NoQuery) == 503);
}

TEST_CASE("survey sides are placed uniformly across sessions")
{
    // 200 simulated sessions of 4 pairs, each keyed like a real session id
    Rng ids(77);
    int left = 0;
    int total = 0;
    for (int s = 0; s < 200; ++s) {
        Rng rng = SplitRng(ids(), 8);
        auto blind = BlindSurvey(std::vector<SurveyPair>(4), rng);
        for (const auto& p : blind) {
            left += p.learned_left ? 1 : 0;
            ++total;
        }
    }
    const double expected = total / 2.0;
    const double chi2 = 2.0 * (left - expected) * (left - expected) / expected;
    MESSAGE("learned model on the left in " << left << " of " << total);
    // 1 degree of freedom, p = 0.001
    CHECK(chi2 < 10.83);
}

TEST_CASE("run creation validates fields")
{
    ServiceOptions options;
    options.data_dir = STEER_DATA_DIR;
    options.runs_root = ScratchDir("service-create");
    TestServer server(options);
    auto client = server.Client();

    auto bad = client.Post("/runs", json { { "dataset", "atlantis" }, { "pop_size", "many" } }.dump(), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    auto body = json::parse(bad->body);
    CHECK(body["error"] == "invalid_config");
    std::set<std::string> fields;
    for (const auto& f : body["fields"]) {
        fields.insert(f["field"].get<std::string>());
    }
    CHECK(fields == std::set<std::string> { "dataset", "pop_size" });

    auto garbage = client.Post("/runs", "{not json", "application/json");
    REQUIRE(garbage);
    CHECK(garbage->status == 400);

    auto oracle = client.Post("/runs", json { { "dataset", "boston" }, { "oracle", { { "target", "size" } } } }.dump(), "application/json");
    REQUIRE(oracle);
    CHECK(oracle->status == 400);

    auto a = client.Post("/runs", SmallRun().dump(), "application/json");
    auto b = client.Post("/runs", SmallRun().dump(), "application/json");
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->status == 201);
    auto ja = json::parse(a->body);
    auto jb = json::parse(b->body);
    CHECK(ja["state"] == "warming_up");
    CHECK(ja["id"] != jb["id"]);

    auto missing = client.Get("/runs/0123456789abcdef");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(json::parse(missing->body)["error"] == "not_found");

    // without competitor pools there is no survey and the front opens when
    // the run finishes
    auto id = ja["id"].get<std::string>();
    auto early = client.Get("/runs/" + id + "/front");
    REQUIRE(early);
    CHECK(early->status == 409);
    server.manager.Get(id)->Run().Wait();
    auto front = client.Get("/runs/" + id + "/front");
    REQUIRE(front);
    CHECK(front->status == 200);
    CHECK_FALSE(json::parse(front->body)["entries"].empty());
    auto survey = client.Get("/runs/" + id + "/survey");
    REQUIRE(survey);
    CHECK(survey->status == 409);
}

TEST_CASE("a full session over HTTP: queries, feedback, survey and replay")
{
    ServiceOptions options;
    options.data_dir = STEER_DATA_DIR;
    options.runs_root = ScratchDir("service-session");
    options.phi_pool = MakePool("pool-phi", ReferenceIndex::DefaultPhi(), 3);
    options.size_pool = MakePool("pool-size", ReferenceIndex::Size(), 3);
    TestServer server(options);
    auto client = server.Client();

    auto created = Body(client.Post("/runs", SmallRun().dump(), "application/json"));
    const std::string base = "/runs/" + created["id"].get<std::string>();

    std::vector<std::string> bodies; // everything the client saw before closing
    std::vector<int> states;
    double last_progress = 0.0;
    auto poll_state = [&] {
        auto s = Body(client.Get(base));
        states.push_back(StateIndex(s["state"].get<std::string>()));
        CHECK(s["progress"].get<double>() >= last_progress);
        CHECK(s["progress"].get<double>() <= 1.0);
        last_progress = s["progress"].get<double>();
        return s;
    };

    int answered = 0;
    bool checked_errors = false;
    for (;;) {
        poll_state();
        auto r = client.Get(base + "/query");
        REQUIRE(r);
        bodies.push_back(r->body);
        if (r->status == 503) {
            CHECK(r->get_header_value("Retry-After") == "1");
            CHECK(json::parse(r->body)["error"] == "no_query");
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            continue;
        }
        if (r->status == 410) {
            CHECK(json::parse(r->body)["next"] == "survey");
            break;
        }
        REQUIRE(r->status == 200);
        auto q = json::parse(r->body);
        CHECK(q["left"]["expression"] != q["right"]["expression"]);
        CHECK_FALSE(q["left"].contains("psi"));
        auto ack = client.Post(base + "/feedback", json { { "query_id", q["id"] }, { "choice", answered % 3 == 0 ? "right" : "left" } }.dump(),
            "application/json");
        REQUIRE(ack);
        if (ack->status == 410) {
            break;
        }
        REQUIRE(ack->status == 200);
        ++answered;
        CHECK(json::parse(ack->body)["cumulative_feedback"] == answered);
        if (!checked_errors) {
            checked_errors = true;
            auto again = client.Post(base + "/feedback", json { { "query_id", q["id"] }, { "choice", "left" } }.dump(), "application/json");
            REQUIRE(again);
            CHECK(again->status == 409);
            auto unknown = client.Post(base + "/feedback", json { { "query_id", 999999 }, { "choice", "left" } }.dump(), "application/json");
            REQUIRE(unknown);
            CHECK(unknown->status == 404);
            auto malformed = client.Post(base + "/feedback", json { { "query_id", q["id"] }, { "choice", "up" } }.dump(), "application/json");
            REQUIRE(malformed);
            CHECK(malformed->status == 400);
        }
    }
    CHECK(answered > 0);
    server.manager.Get(created["id"])->Run().Wait();

    auto status = poll_state();
    CHECK(status["state"] == "finished");
    CHECK(status["progress"] == 1.0);
    CHECK(status["cumulative_feedback"] == answered);
    // misprediction accounting in the telemetry matches the log
    int logged = 0;
    for (const auto& e : server.manager.Get(created["id"])->Events()) {
        if (e["type"] == "answer" && e["mispredicted"].get<bool>()) {
            ++logged;
        }
    }
    int reported = 0;
    int feedback = 0;
    for (const auto& t : status["telemetry"]) {
        reported += t["mispredictions"].get<int>();
        feedback += t["feedback"].get<int>();
    }
    CHECK(reported == logged);
    CHECK(feedback == answered);

    auto late = client.Post(base + "/feedback", json { { "query_id", 1 }, { "choice", "left" } }.dump(), "application/json");
    REQUIRE(late);
    CHECK(late->status == 410);

    // the front stays hidden until the survey is done
    auto hidden = client.Get(base + "/front");
    REQUIRE(hidden);
    CHECK(hidden->status == 409);
    auto premature = client.Post(base + "/survey", json { { "pair_id", 1 }, { "choice", "left" } }.dump(), "application/json");
    REQUIRE(premature);
    CHECK(premature->status == 409);

    auto survey_r = client.Get(base + "/survey");
    REQUIRE(survey_r);
    REQUIRE(survey_r->status == 200);
    bodies.push_back(survey_r->body);
    auto survey = json::parse(survey_r->body);
    CHECK(poll_state()["state"] == "surveying");
    REQUIRE(survey["pairs"].size() == 4);
    for (const auto& p : survey["pairs"]) {
        std::set<std::string> keys;
        for (const auto& [k, v] : p.items()) {
            keys.insert(k);
        }
        CHECK(keys == std::set<std::string> { "pair_id", "left", "right", "answered" });
        CHECK(p["left"].size() == 1);
        CHECK(p["right"].size() == 1);
    }
    // the same pairs, in the same places, on every read
    CHECK(Body(client.Get(base + "/survey"))["pairs"] == survey["pairs"]);

    auto unknown_pair = client.Post(base + "/survey", json { { "pair_id", 99 }, { "choice", "left" } }.dump(), "application/json");
    REQUIRE(unknown_pair);
    CHECK(unknown_pair->status == 404);

    int remaining = 4;
    for (const auto& p : survey["pairs"]) {
        auto a = client.Post(base + "/survey", json { { "pair_id", p["pair_id"] }, { "choice", "left" } }.dump(), "application/json");
        REQUIRE(a);
        CHECK(a->status == 200);
        bodies.push_back(a->body);
        CHECK(json::parse(a->body)["remaining"] == --remaining);
        if (remaining > 0) {
            auto repeat = client.Post(base + "/survey", json { { "pair_id", p["pair_id"] }, { "choice", "right" } }.dump(), "application/json");
            REQUIRE(repeat);
            CHECK(repeat->status == 409);
        }
    }
    CHECK(poll_state()["state"] == "closed");
    auto front = client.Get(base + "/front");
    REQUIRE(front);
    CHECK(front->status == 200);

    // blinding: nothing before closing named the provenance of survey models
    for (const auto& b : bodies) {
        CHECK(b.find("learned") == std::string::npos);
        CHECK(b.find("competitor") == std::string::npos);
    }
    // states only move forward
    CHECK(std::is_sorted(states.begin(), states.end()));

    // the event log reconstructs the session
    auto session = server.manager.Get(created["id"]);
    for (const auto& events : { session->Events(), ReadEvents(options.runs_root / created["id"].get<std::string>() / "events.jsonl") }) {
        auto replayed = ReplaySession(events);
        CHECK(replayed.state == SessionState::Closed);
        CHECK(replayed.run.telemetry == session->Run().Telemetry());
        CHECK(replayed.run.pairs.size() == session->Run().BufferedPairs());
        CHECK(replayed.run.pairs.size() - replayed.run.warmup_pairs == static_cast<std::size_t>(answered));
        REQUIRE(replayed.survey.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            REQUIRE(replayed.survey[i].answer);
            CHECK(*replayed.survey[i].answer == Choice::Left);
            CHECK(replayed.survey[i].Left().expression == survey["pairs"][i]["left"]["expression"]);
        }
    }
}
