#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "thermoscreen/edge/agent.hpp"
#include "thermoscreen/simulator.hpp"

using namespace thermoscreen;
using namespace thermoscreen::edge;
using namespace std::chrono_literals;

namespace {

TemperatureReading reading(std::uint64_t seq) { return {"edge-01", seq, 1000 * seq, {22.3, 114.17}, 36.6, true, true}; }

// Scripted cloud: fails the first `fail_first` requests before they are
// "sent", then answers with `status`. Records every body that got through.
class FakeTransport final : public Transport {
public:
    explicit FakeTransport(int status = 201, int fail_first = 0) : status_(status), fail_first_(fail_first) {}

    TransportResponse post_reading(const std::string& body) override
    {
        std::lock_guard lock(mu_);
        ++calls_;
        if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
        if (fail_first_ > 0) {
            --fail_first_;
            return {0, {}, "connection refused"};
        }
        if (down_) return {0, {}, "connection refused"};
        received_.push_back(nlohmann::json::parse(body)["seq"].get<std::uint64_t>());
        return {status_, R"({"id":1})", {}};
    }

    void set_down(bool d)
    {
        std::lock_guard lock(mu_);
        down_ = d;
    }
    void set_delay(std::chrono::milliseconds d) { delay_ = d; }
    std::vector<std::uint64_t> received()
    {
        std::lock_guard lock(mu_);
        return received_;
    }
    int calls()
    {
        std::lock_guard lock(mu_);
        return calls_;
    }

private:
    std::mutex mu_;
    int status_;
    int fail_first_;
    bool down_ = false;
    int calls_ = 0;
    std::chrono::milliseconds delay_{0};
    std::vector<std::uint64_t> received_;
};

UploaderConfig fast(std::size_t capacity = 16)
{
    return {capacity, RetryPolicy{5ms, 2.0, 40ms, 0.2}, 7};
}

template <class Pred>
bool eventually(Pred p, std::chrono::milliseconds timeout = 5000ms)
{
    const auto end = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < end) {
        if (p()) return true;
        std::this_thread::sleep_for(2ms);
    }
    return p();
}

sim::SceneSpec single_face(double core, bool mask, double noise = 0.0)
{
    sim::SceneSpec spec;
    spec.seed = 11;
    spec.thermal_noise_c = noise;
    sim::FaceSpec f;
    f.bbox = {620, 520, 170, 204};
    f.landmarks = sim::canonical_landmarks(f.bbox);
    f.core_temp_c = core;
    f.mask_worn = mask;
    spec.faces.push_back(f);
    return spec;
}

PipelineState calibrated(const AffineTransform& t = kFlirOneProTransform)
{
    PipelineState s;
    s.device_id = "edge-01";
    s.location = {22.3, 114.17};
    s.transform = t;
    return s;
}

}  // namespace

TEST(AgentConfig, ParsesKeyValues)
{
    std::istringstream in(R"(# sample
device_id = edge-07
location.lat = 22.28
location.lon=114.16
cloud_url = http://10.0.0.5:8080
transform_path = /etc/thermo/aff1.txt
queue_capacity = 64
retry.initial_ms = 250
retry.max_ms = 8000
temperature.method = max
)");
    const auto c = parse_agent_config(in);
    EXPECT_EQ(c.device_id, "edge-07");
    EXPECT_DOUBLE_EQ(c.location.lat, 22.28);
    EXPECT_DOUBLE_EQ(c.location.lon, 114.16);
    EXPECT_EQ(c.cloud_url, "http://10.0.0.5:8080");
    EXPECT_EQ(c.queue_capacity, 64u);
    EXPECT_EQ(c.retry.initial, 250ms);
    EXPECT_EQ(c.retry.max, 8000ms);
    EXPECT_EQ(c.temperature.method, Aggregation::Max);
    EXPECT_DOUBLE_EQ(c.mask_threshold, 0.5);
}

TEST(AgentConfig, EnvironmentOverrideAndErrors)
{
    std::istringstream in("device_id = a\ncloud_url = http://x:1\n");
    EXPECT_EQ(parse_agent_config(in, "http://override:9").cloud_url, "http://override:9");
    auto bad = [](const std::string& text) {
        std::istringstream s(text);
        return parse_agent_config(s);
    };
    EXPECT_THROW(bad("cloud_url = http://x\n"), InvalidConfig);  // no device_id
    EXPECT_THROW(bad("device_id = a\nqueue_capacity = 0\n"), InvalidConfig);
    EXPECT_THROW(bad("device_id = a\nqueue_capacity = -3\n"), InvalidConfig);
    EXPECT_THROW(bad("device_id = a\nlocation.lat = 95\n"), InvalidConfig);
    EXPECT_THROW(bad("device_id = a\nretry.initial_ms = 5000\nretry.max_ms = 100\n"), InvalidConfig);
    EXPECT_THROW(bad("device_id = a\nretry.jitter = 1.5\n"), InvalidConfig);
    EXPECT_THROW(bad("device_id = a\nfrobnicate = 1\n"), InvalidConfig);
    EXPECT_THROW(bad("device_id = a\nlocation.lat = north\n"), InvalidConfig);
    EXPECT_THROW(bad("just words\n"), InvalidConfig);
    EXPECT_THROW(load_agent_config("/nonexistent/agent.conf"), InvalidConfig);
}

TEST(RetryPolicy, BackoffSchedule)
{
    const RetryPolicy p;
    EXPECT_EQ(p.nominal(1), 500ms);
    EXPECT_EQ(p.nominal(2), 1000ms);
    EXPECT_EQ(p.nominal(3), 2000ms);
    EXPECT_EQ(p.nominal(7), 30000ms);
    EXPECT_EQ(p.nominal(60), 30000ms);
    EXPECT_EQ(p.delay(1, -1.0), 400ms);
    EXPECT_EQ(p.delay(1, 1.0), 600ms);
    EXPECT_EQ(p.delay(10, 1.0), 36000ms);
}

TEST(ProcessPair, OneFaceMatchesTruth)
{
    for (bool mask : {false, true}) {
        const auto scene = sim::render_scene(single_face(36.8, mask, 0.1));
        const MockDetector det(scene.truth.detector_truth());
        auto state = calibrated();
        const auto out = process_pair(scene.rgb, scene.thermal, det.scorers(), {}, state, 123);
        ASSERT_EQ(out.size(), 1u);
        const auto& r = out[0].reading;
        EXPECT_NEAR(r.temperature_c, 36.8, 0.3);
        EXPECT_EQ(r.mask_worn, mask);
        EXPECT_TRUE(r.alignment_ok);
        EXPECT_EQ(r.seq, 1u);
        EXPECT_EQ(r.device_id, "edge-01");
        EXPECT_EQ(r.timestamp_ms, 123u);
        EXPECT_EQ(out[0].estimate.method, "percentile(95)");
    }
}

TEST(ProcessPair, SequenceNumbersIncrease)
{
    auto spec = sim::random_scene(3, {.n_faces = 3});
    const auto scene = sim::render_scene(spec);
    const MockDetector det(scene.truth.detector_truth());
    auto state = calibrated();
    const auto a = process_pair(scene.rgb, scene.thermal, det.scorers(), {}, state, 1);
    const auto b = process_pair(scene.rgb, scene.thermal, det.scorers(), {}, state, 2);
    ASSERT_EQ(a.size(), 3u);
    ASSERT_EQ(b.size(), 3u);
    std::uint64_t expect = 1;
    for (const auto* v : {&a, &b})
        for (const auto& fr : *v) EXPECT_EQ(fr.reading.seq, expect++);
}

TEST(ProcessPair, EmptySceneIsRetake)
{
    sim::SceneSpec spec;
    const auto scene = sim::render_scene(spec);
    const MockDetector det(scene.truth.detector_truth());
    auto state = calibrated();
    EXPECT_TRUE(process_pair(scene.rgb, scene.thermal, det.scorers(), {}, state, 1).empty());
    EXPECT_EQ(state.counters.empty_pairs, 1u);
    EXPECT_EQ(state.next_seq, 1u);
}

TEST(ProcessPair, EyesOnTopEdgeAreSkipped)
{
    auto spec = single_face(36.8, false);
    auto& f = spec.faces[0];
    f.landmarks.left_eye.y = f.bbox.top;
    f.landmarks.right_eye.y = f.bbox.top;
    const auto scene = sim::render_scene(spec);
    const MockDetector det(scene.truth.detector_truth());
    auto state = calibrated();
    EXPECT_TRUE(process_pair(scene.rgb, scene.thermal, det.scorers(), {}, state, 1).empty());
    EXPECT_EQ(state.counters.faces, 1u);
    EXPECT_EQ(state.counters.skipped_degenerate, 1u);
}

TEST(ProcessPair, OutOfBandFlaggedNotDropped)
{
    auto scene = sim::render_scene(single_face(36.8, true));
    for (auto& v : scene.thermal.values) v = celsius_to_centikelvin(20.0);
    const MockDetector det(scene.truth.detector_truth());
    auto state = calibrated();
    const auto out = process_pair(scene.rgb, scene.thermal, det.scorers(), {}, state, 1);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_FALSE(out[0].reading.alignment_ok);
    EXPECT_NEAR(out[0].reading.temperature_c, 20.0, 1e-9);
    EXPECT_EQ(state.counters.flagged_invalid, 1u);
}

TEST(ProcessPair, CalibrationMissingIsFatal)
{
    const auto scene = sim::render_scene(single_face(36.8, true));
    const MockDetector det(scene.truth.detector_truth());
    PipelineState state;
    EXPECT_THROW(process_pair(scene.rgb, scene.thermal, det.scorers(), {}, state, 1), CalibrationMissing);
}

TEST(Uploader, CloudUpAcks)
{
    auto t = std::make_shared<FakeTransport>(201);
    std::vector<UploadOutcome> outcomes;
    std::mutex mu;
    Uploader up(t, fast(), [&](const TemperatureReading&, UploadOutcome o, auto) {
        std::lock_guard lock(mu);
        outcomes.push_back(o);
    });
    EXPECT_EQ(up.submit(reading(1)), UploadOutcome::Queued);
    ASSERT_TRUE(up.wait_idle(5000ms));
    up.shutdown(0ms);
    EXPECT_EQ(outcomes, std::vector<UploadOutcome>{UploadOutcome::Ack});
    EXPECT_EQ(up.stats().delivered, 1u);
}

TEST(Uploader, OutageThenRecoveryDeliversInOrderOnce)
{
    auto t = std::make_shared<FakeTransport>(201);
    t->set_down(true);
    Uploader up(t, fast());
    for (std::uint64_t s = 1; s <= 3; ++s) up.submit(reading(s));
    ASSERT_TRUE(eventually([&] { return t->calls() >= 4; }));
    t->set_down(false);
    ASSERT_TRUE(up.wait_idle(5000ms));
    up.shutdown(0ms);
    EXPECT_EQ(t->received(), (std::vector<std::uint64_t>{1, 2, 3}));
    const auto st = up.stats();
    EXPECT_EQ(st.delivered, 3u);
    EXPECT_GE(st.failures, 4u);
    EXPECT_EQ(st.dropped, 0u);
}

TEST(Uploader, FullQueueDropsOldest)
{
    auto t = std::make_shared<FakeTransport>(201);
    t->set_down(true);
    std::vector<std::uint64_t> dropped;
    std::mutex mu;
    UploaderConfig cfg{2, RetryPolicy{std::chrono::milliseconds(10000), 2.0, std::chrono::milliseconds(30000), 0.0},
                       1};
    Uploader up(t, cfg, [&](const TemperatureReading& r, UploadOutcome o, auto) {
        std::lock_guard lock(mu);
        if (o == UploadOutcome::Dropped) dropped.push_back(r.seq);
    });
    up.submit(reading(1));
    ASSERT_TRUE(eventually([&] { return up.stats().failures == 1; }));  // head now waits in backoff
    up.submit(reading(2));
    up.submit(reading(3));
    const auto st = up.stats();
    EXPECT_EQ(st.dropped, 1u);
    EXPECT_EQ(st.pending, 2u);
    up.shutdown(0ms);
    EXPECT_EQ(dropped, std::vector<std::uint64_t>{1});
    EXPECT_EQ(up.stats().produced, 3u);
}

TEST(Uploader, PermanentRejectionIsNotRetried)
{
    for (int status : {400, 422}) {
        auto t = std::make_shared<FakeTransport>(status);
        Uploader up(t, fast());
        up.submit(reading(1));
        ASSERT_TRUE(up.wait_idle(5000ms));
        up.shutdown(0ms);
        EXPECT_EQ(t->calls(), 1);
        EXPECT_EQ(up.stats().rejected, 1u);
        EXPECT_EQ(up.stats().delivered, 0u);
    }
}

TEST(Uploader, DuplicateCountsAsAck)
{
    for (int status : {200, 409}) {
        auto t = std::make_shared<FakeTransport>(status);
        Uploader up(t, fast());
        up.submit(reading(1));
        ASSERT_TRUE(up.wait_idle(5000ms));
        up.shutdown(0ms);
        EXPECT_EQ(up.stats().delivered, 1u);
        EXPECT_EQ(up.stats().duplicates, 1u);
    }
}

TEST(Uploader, ServerErrorsAreRetried)
{
    auto t = std::make_shared<FakeTransport>(503);
    Uploader up(t, fast());
    up.submit(reading(1));
    ASSERT_TRUE(eventually([&] { return t->calls() >= 3; }));
    up.shutdown(0ms);
    EXPECT_EQ(up.stats().delivered, 0u);
    EXPECT_EQ(up.stats().pending, 1u);
}

TEST(Uploader, SubmitNeverWaitsForTheNetwork)
{
    auto t = std::make_shared<FakeTransport>(201);
    t->set_delay(300ms);
    Uploader up(t, fast(64));
    const auto start = std::chrono::steady_clock::now();
    for (std::uint64_t s = 1; s <= 20; ++s) up.submit(reading(s));
    EXPECT_LT(std::chrono::steady_clock::now() - start, 100ms);
    up.shutdown(0ms);
}

TEST(Uploader, DrainDeadlineBoundsShutdown)
{
    auto t = std::make_shared<FakeTransport>(201);
    t->set_down(true);
    Uploader up(t, {16, RetryPolicy{std::chrono::milliseconds(10000), 2.0, std::chrono::milliseconds(30000), 0.2}, 1});
    for (std::uint64_t s = 1; s <= 5; ++s) up.submit(reading(s));
    const auto start = std::chrono::steady_clock::now();
    up.shutdown(150ms);
    const auto took = std::chrono::steady_clock::now() - start;
    EXPECT_LT(took, 2000ms);
    EXPECT_GE(took, 100ms);
    const auto st = up.stats();
    EXPECT_EQ(st.pending, 5u);
    EXPECT_EQ(st.delivered + st.dropped + st.rejected + st.pending, st.produced);
    EXPECT_EQ(up.submit(reading(6)), UploadOutcome::Dropped);
}

TEST(Uploader, DrainDeliversBacklog)
{
    auto t = std::make_shared<FakeTransport>(201, 3);
    Uploader up(t, fast());
    for (std::uint64_t s = 1; s <= 10; ++s) up.submit(reading(s));
    up.shutdown(5000ms);
    EXPECT_EQ(up.stats().delivered, 10u);
    EXPECT_EQ(t->received().size(), 10u);
}

TEST(Uploader, ConservationUnderRandomFaults)
{
    auto inner = std::make_shared<FakeTransport>(201);
    auto faulty = std::make_shared<FaultInjectingTransport>(inner, 0.4, 99);
    Uploader up(faulty, fast(8));
    for (std::uint64_t s = 1; s <= 200; ++s) {
        up.submit(reading(s));
        if (s % 10 == 0) std::this_thread::sleep_for(1ms);
    }
    up.shutdown(10000ms);
    const auto st = up.stats();
    EXPECT_EQ(st.produced, 200u);
    EXPECT_EQ(st.delivered + st.dropped + st.rejected + st.pending, st.produced);
    EXPECT_EQ(st.pending, 0u);
    // Server saw each delivered reading at least once, in increasing seq order.
    const auto got = inner->received();
    EXPECT_TRUE(std::is_sorted(got.begin(), got.end()));
    EXPECT_GE(got.size(), st.delivered);
    EXPECT_GT(faulty->dropped_after(), 0u);
}

TEST(FaultInjection, DropPlacement)
{
    auto inner = std::make_shared<FakeTransport>(201);
    FaultInjectingTransport all(inner, 0.999999, 5);
    int before = 0, after = 0;
    for (int i = 0; i < 200; ++i) {
        const auto calls = inner->calls();
        EXPECT_TRUE(all.post_reading(thermoscreen::to_json(reading(1)).dump()).network_failure());
        (inner->calls() == calls ? before : after)++;
    }
    EXPECT_EQ(static_cast<std::uint64_t>(before), all.dropped_before());
    EXPECT_EQ(static_cast<std::uint64_t>(after), all.dropped_after());
    EXPECT_GT(before, 50);
    EXPECT_GT(after, 50);
    FaultInjectingTransport none(inner, 0.0, 5);
    EXPECT_EQ(none.post_reading(thermoscreen::to_json(reading(1)).dump()).status, 201);
}

TEST(PairTracker, PairsByStemWithTimeout)
{
    PairTracker t(2000ms);
    const auto t0 = PairTracker::Clock::now();
    auto p = t.update({{"a", {true, false}}}, t0);
    EXPECT_TRUE(p.ready.empty());
    p = t.update({{"a", {true, true}}, {"b", {false, true}}}, t0 + 500ms);
    ASSERT_EQ(p.ready.size(), 1u);
    EXPECT_EQ(p.ready[0].stem, "a");
    p = t.update({{"a", {true, true}}, {"b", {false, true}}}, t0 + 1000ms);
    EXPECT_TRUE(p.ready.empty());  // each pair once
    EXPECT_TRUE(p.expired.empty());
    p = t.update({{"b", {false, true}}}, t0 + 2600ms);
    EXPECT_EQ(p.expired, std::vector<std::string>{"b"});
    p = t.update({{"b", {true, true}}}, t0 + 3000ms);
    EXPECT_TRUE(p.ready.empty());  // given up on
}

TEST(PairTracker, PollsDirectory)
{
    const auto dir = std::filesystem::temp_directory_path() / ("thermo-pairs-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    for (const char* f : {"s1.png", "s1.thrm", "s2.png", "s3.png.part", "notes.txt"}) std::ofstream(dir / f) << "x";
    PairTracker t(2000ms);
    const auto p = poll_directory(t, dir);
    ASSERT_EQ(p.ready.size(), 1u);
    EXPECT_EQ(p.ready[0].stem, "s1");
    EXPECT_EQ(p.ready[0].thermal, dir / "s1.thrm");
    std::filesystem::remove_all(dir);
}

TEST(EdgeAgent, PipelineFeedsUploader)
{
    auto t = std::make_shared<FakeTransport>(201);
    AgentConfig cfg;
    cfg.device_id = "edge-01";
    cfg.retry = {5ms, 2.0, 40ms, 0.2};
    cfg.drain_deadline = 5000ms;
    EdgeAgent agent(cfg, kFlirOneProTransform, t);
    const auto scene = sim::render_scene(sim::random_scene(8, {.n_faces = 2}));
    const MockDetector det(scene.truth.detector_truth());
    const auto out = agent.handle_pair(scene.rgb, scene.thermal, det.scorers(), 5);
    ASSERT_EQ(out.size(), 2u);
    agent.shutdown();
    EXPECT_EQ(agent.upload_stats().delivered, 2u);
    EXPECT_EQ(t->received(), (std::vector<std::uint64_t>{1, 2}));
}
