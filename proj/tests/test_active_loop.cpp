#include <doctest.h>

#include <set>
#include <thread>

#include "helpers.hpp"
#include "steer/active_loop.hpp"

using namespace steer;
using steer::testing::DataFile;
using steer::testing::ScratchDir;

namespace {

FeatureVector Features(int size)
{
    return FeatureVector { size, 0, 0, 0, 0, 1 };
}

LiveConfig SmallConfig(std::uint64_t seed)
{
    LiveConfig c;
    c.dataset = DataFile("boston.csv").string();
    c.seed = seed;
    c.evolution.pop_size = 32;
    c.evolution.generations = 8;
    return c;
}

void CheckAccounting(const std::vector<TelemetryRecord>& t, std::size_t buffered, std::size_t warmup_pairs)
{
    int sum = 0;
    int previous = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(t[i].generation == static_cast<int>(i) + 1);
        sum += t[i].feedback;
        CHECK(t[i].cumulative == sum);
        CHECK(t[i].cumulative >= previous);
        CHECK(t[i].mispredictions <= t[i].feedback);
        previous = t[i].cumulative;
    }
    REQUIRE_FALSE(t.empty());
    CHECK(t.front().normalized == 1.0);
    CHECK(static_cast<std::size_t>(t.back().cumulative) == buffered - warmup_pairs);
}

void CheckReplay(const std::vector<nlohmann::json>& events, const LiveRun& run)
{
    auto replayed = Replay(events);
    CHECK(replayed.state == RunState::Finished);
    CHECK(replayed.telemetry == run.Telemetry());
    CHECK(replayed.pairs.size() == run.BufferedPairs());
    CHECK(replayed.warmup_pairs == run.WarmupPairs());
    CHECK(replayed.snapshot_version == run.Snapshot()->Version());
    CHECK(replayed.generation == run.Generation());
}

} // namespace

TEST_CASE("tracker insertion and dedupe")
{
    UncertaintyTracker t;
    t.Observe("x0", Features(1), 0.2);
    CHECK(t.Size() == 1);

    UncertaintyTracker d;
    d.Observe("(x0 + x1)", Features(3), 0.1);
    d.Observe("(x0 + x1)", Features(3), 0.3);
    REQUIRE(d.Size() == 1);
    CHECK(d.Entries()[0].sigma == 0.3);
    d.Observe("(x0 + x1)", Features(3), 0.2);
    CHECK(d.Entries()[0].sigma == 0.3);

    UncertaintyTracker full(UncertaintyTracker::kDefaultCapacity);
    for (int i = 0; i < 64; ++i) {
        full.Observe("m" + std::to_string(i), Features(i % 25 + 1), 1.0 + i);
    }
    auto before = full.Entries();
    full.Observe("low", Features(2), 0.5);
    CHECK(full.Size() == 64);
    CHECK(full.Entries().back().expression == before.back().expression);
    full.Observe("high", Features(2), 500.0);
    CHECK(full.Size() == 64);
    CHECK(full.Entries().front().expression == "high");

    CHECK_THROWS_AS(t.Observe("x1", Features(1), -0.1), Error);
}

TEST_CASE("queries pair the two most uncertain models")
{
    UncertaintyTracker t;
    t.Observe("a", Features(1), 0.5);
    t.Observe("b", Features(2), 0.4);
    t.Observe("c", Features(3), 0.1);
    auto pair = t.TakePair();
    REQUIRE(pair);
    CHECK(pair->first.expression == "a");
    CHECK(pair->second.expression == "b");
    CHECK(t.Size() == 1);
    CHECK_FALSE(t.TakePair());

    UncertaintyTracker two;
    two.Observe("a", Features(1), 0.5);
    two.Observe("b", Features(1), 0.4);
    CHECK(two.TakePair());
    CHECK(two.Size() == 0);

    // identical features give the network nothing to compare, so the partner
    // is the most uncertain model that differs
    UncertaintyTracker same;
    same.Observe("(x0 + x1)", Features(3), 0.5);
    same.Observe("(x2 + x3)", Features(3), 0.5);
    same.Observe("x4", Features(1), 0.2);
    pair = same.TakePair();
    REQUIRE(pair);
    CHECK(pair->first.expression == "(x0 + x1)");
    CHECK(pair->second.expression == "x4");
}

TEST_CASE("tracker invariants under random observation streams")
{
    Rng rng(8);
    std::uniform_int_distribution<int> name(0, 150);
    std::uniform_real_distribution<double> sigma(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        UncertaintyTracker t(2 + trial % 70);
        for (int i = 0; i < 400; ++i) {
            int k = name(rng);
            t.Observe("m" + std::to_string(k), Features(k % 25 + 1), sigma(rng));
            if (i % 37 == 0) {
                t.TakePair();
            }
            const auto& e = t.Entries();
            REQUIRE(e.size() <= t.Capacity());
            std::set<std::string> names;
            for (std::size_t j = 0; j < e.size(); ++j) {
                CHECK(names.insert(e[j].expression).second);
                CHECK(e[j].sigma >= 0.0);
                if (j > 0) {
                    CHECK(e[j - 1].sigma >= e[j].sigma);
                }
            }
        }
    }
}

TEST_CASE("config parsing reports every bad field")
{
    auto c = LiveConfigFromJson(nlohmann::json::object());
    CHECK(c.evolution.pop_size == 256);
    CHECK(c.evolution.generations == 50);
    CHECK(c.warmup_models == 100);
    CHECK(c.tracker_capacity == 64);

    auto round = LiveConfigFromJson(ToJson(SmallConfig(3)));
    CHECK(ToJson(round) == ToJson(SmallConfig(3)));

    nlohmann::json bad { { "pop_size", 1 }, { "task", "ranking" }, { "colour", "blue" }, { "oracle", { { "noise_p", 2.0 } } } };
    try {
        LiveConfigFromJson(bad);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        std::set<std::string> fields;
        for (const auto& f : e.Fields()) {
            fields.insert(f.field);
        }
        CHECK(fields == std::set<std::string> { "pop_size", "task", "colour", "oracle.noise_p" });
        CHECK(e.Code() == ErrorCode::InvalidConfig);
    }
}

TEST_CASE("missing dataset aborts before the run starts")
{
    auto c = SmallConfig(1);
    c.dataset = "/nonexistent/table.csv";
    CHECK_THROWS_AS(LiveRun { c }, Error);
}

TEST_CASE("oracle sessions account for every answer and replay exactly")
{
    auto dir = ScratchDir("oracle-session");
    LiveRun run(SmallConfig(11), dir);
    auto result = run.RunWithOracle(OracleUser(ReferenceIndex::Size()));
    CHECK(run.State() == RunState::Finished);
    CHECK(run.Generation() == 8);
    CHECK(run.Progress() == 1.0);
    CHECK_FALSE(result.front.Empty());
    REQUIRE(result.telemetry.size() == 8);
    CheckAccounting(result.telemetry, run.BufferedPairs(), run.WarmupPairs());
    CHECK(result.telemetry.back().cumulative == 8 * 4);

    CheckReplay(run.Events(), run);
    CheckReplay(ReadEvents(dir / "events.jsonl"), run);

    CHECK(LoadFront(dir / "front.jsonl") == result.front);
    CHECK(Mlp::Load(dir / "estimator.json") == *result.estimator);
    CHECK(LiveConfigFromJson(nlohmann::json::parse(std::ifstream(dir / "config.json"))).seed == 11);

    CHECK_THROWS_AS(run.NextQuery(), Error);
    try {
        run.SubmitFeedback(1, Choice::Left);
        FAIL("expected gone");
    } catch (const Error& e) {
        CHECK(e.Code() == ErrorCode::Gone);
    }
}

TEST_CASE("seeded oracle sessions are bit-reproducible")
{
    auto a = LiveRun(SmallConfig(5)).RunWithOracle(OracleUser(ReferenceIndex::Size()));
    auto b = LiveRun(SmallConfig(5)).RunWithOracle(OracleUser(ReferenceIndex::Size()));
    CHECK(a.front == b.front);
    CHECK(a.telemetry == b.telemetry);
    CHECK(*a.estimator == *b.estimator);
    auto c = LiveRun(SmallConfig(6)).RunWithOracle(OracleUser(ReferenceIndex::Size()));
    CHECK_FALSE(*a.estimator == *c.estimator);
}

TEST_CASE("full oracle session on Boston completes 50 generations")
{
    LiveConfig c;
    c.dataset = DataFile("boston.csv").string();
    c.seed = 1;
    LiveRun run(c);
    auto result = run.RunWithOracle(OracleUser(ReferenceIndex::Size()));
    CHECK(run.Generation() == 50);
    CHECK_FALSE(result.front.Empty());
    CheckAccounting(result.telemetry, run.BufferedPairs(), run.WarmupPairs());
}

TEST_CASE("a session without any answers still completes")
{
    auto config = SmallConfig(2);
    LiveRun run(config);
    run.Start();
    run.Wait();
    CHECK(run.State() == RunState::Finished);
    CHECK(run.Generation() == config.evolution.generations);
    auto result = run.Result();
    CHECK_FALSE(result.front.Empty());
    for (const auto& r : result.telemetry) {
        CHECK(r.feedback == 0);
        CHECK(r.cumulative == 0);
    }
    // the estimator never moved past its warm-up state
    auto warm = Replay(run.Events());
    CHECK(result.estimator->Version() == warm.snapshot_version);
    CHECK(run.BufferedPairs() == run.WarmupPairs());
    CheckReplay(run.Events(), run);
}

TEST_CASE("human-mode intake contracts")
{
    auto config = SmallConfig(3);
    config.evolution.generations = 30;
    config.pace_ms = 20;
    LiveRun run(config);
    CHECK_THROWS_AS(run.Result(), Error);
    run.Start();

    // wait for the first query
    Query q;
    for (;;) {
        try {
            q = run.NextQuery();
            break;
        } catch (const Error& e) {
            REQUIRE(e.Code() == ErrorCode::NoQuery);
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    }
    CHECK(q.left.expression != q.right.expression);
    CHECK(run.NextQuery().id == q.id);

    // no answer is pending, so the snapshot cannot move under us
    auto snap = run.Snapshot();
    const double psi_left = snap->Predict(EncodeFeatures(q.left.features));
    const double psi_right = snap->Predict(EncodeFeatures(q.right.features));
    const Choice against = psi_left < psi_right ? Choice::Left : Choice::Right;
    auto ack = run.SubmitFeedback(q.id, against);
    CHECK(ack.mispredicted == (psi_left != psi_right));
    CHECK(ack.cumulative == 1);

    try {
        run.SubmitFeedback(q.id, Choice::Left);
        FAIL("expected conflict");
    } catch (const Error& e) {
        CHECK(e.Code() == ErrorCode::Conflict);
    }
    try {
        run.SubmitFeedback(9999, Choice::Left);
        FAIL("expected not found");
    } catch (const Error& e) {
        CHECK(e.Code() == ErrorCode::NotFound);
    }

    // answer with the size oracle until the run closes
    OracleUser ell(ReferenceIndex::Size());
    Rng rng(1);
    int agreed = 0;
    for (;;) {
        try {
            auto next = run.NextQuery();
            CHECK(next.id > q.id);
            CHECK(next.left.expression != next.right.expression);
            auto choice = ell.Answer(next.left.features, next.right.features, rng);
            auto snap_now = run.Snapshot();
            const bool expect = choice == Choice::Left ? snap_now->Predict(EncodeFeatures(next.left.features)) < snap_now->Predict(EncodeFeatures(next.right.features))
                                                       : snap_now->Predict(EncodeFeatures(next.right.features)) < snap_now->Predict(EncodeFeatures(next.left.features));
            auto a = run.SubmitFeedback(next.id, choice);
            // training may publish between the two reads; only count stable cases
            agreed += a.mispredicted == expect ? 1 : 0;
            q = next;
        } catch (const Error& e) {
            if (e.Code() == ErrorCode::Gone) {
                break;
            }
            REQUIRE(e.Code() == ErrorCode::NoQuery);
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
    }
    run.Wait();
    CHECK(run.State() == RunState::Finished);
    CHECK(agreed > 0);
    auto result = run.Result();
    CheckAccounting(result.telemetry, run.BufferedPairs(), run.WarmupPairs());
    CHECK(result.telemetry.back().cumulative > 1);
    CheckReplay(run.Events(), run);
}
