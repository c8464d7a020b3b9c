#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "thermoscreen/cloud/service.hpp"
#include "thermoscreen/thermal.hpp"

using namespace thermoscreen;
using namespace thermoscreen::cloud;

namespace {

std::string read_file(const std::string& name)
{
    std::ifstream in(std::string(THERMOSCREEN_GOLDEN_DIR) + "/" + name, std::ios::binary);
    if (!in) throw std::runtime_error("missing golden " + name);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Golden files hold one compact JSON document plus a trailing newline.
std::string golden(const std::string& name)
{
    auto s = read_file(name);
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

TemperatureReading sample_reading()
{
    return {"edge-01", 42, 1700000000123ULL, {22.3, 114.17}, 38.2, false, true};
}

struct TempDir {
    std::filesystem::path path;
    TempDir()
    {
        path = std::filesystem::temp_directory_path() /
               ("thermo-golden-" + std::to_string(::getpid()) + "-" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        std::filesystem::remove_all(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

StoreConfig fixed_clock_store(const std::filesystem::path& dir)
{
    StoreConfig cfg;
    cfg.data_dir = dir;
    cfg.fsync = false;
    cfg.now_ms = [] { return std::uint64_t{1700000000500ULL}; };
    return cfg;
}

}  // namespace

TEST(WireGolden, ReadingBody)
{
    EXPECT_EQ(thermoscreen::to_json(sample_reading()).dump(), golden("post_reading_body.json"));
    const auto parsed = parse_reading(nlohmann::json::parse(golden("post_reading_body.json")));
    ASSERT_TRUE(parsed.reading.has_value());
    EXPECT_EQ(*parsed.reading, sample_reading());
}

TEST(WireGolden, HttpResponsesThroughService)
{
    TempDir dir;
    CloudService svc(fixed_clock_store(dir.path));
    const auto body = golden("post_reading_body.json");

    auto r = svc.handle("POST", "/api/v1/readings", body);
    EXPECT_EQ(r.status, 201);
    EXPECT_EQ(r.body, golden("post_reading_201.json"));

    r = svc.handle("POST", "/api/v1/readings", body);
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body, golden("post_reading_200_duplicate.json"));

    auto bad = nlohmann::json::parse(body);
    bad["location"]["lat"] = 91.0;
    bad["temperature_c"] = 151.0;
    r = svc.handle("POST", "/api/v1/readings", bad.dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(r.body, golden("post_reading_422.json"));

    auto malformed = nlohmann::json::parse(body);
    malformed["seq"] = "42";
    r = svc.handle("POST", "/api/v1/readings", malformed.dump());
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body, golden("post_reading_400.json"));

    r = svc.handle("GET", "/api/v1/readings?limit=10", "");
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body, golden("get_readings_200.json"));

    r = svc.handle("GET", "/api/v1/health", "");
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body, golden("health_200.json"));
}

TEST(WireGolden, ServerFrames)
{
    const auto alert = evaluate_alert(sample_reading(), {});
    ASSERT_TRUE(alert.has_value());
    auto a = *alert;
    a.id = 1;
    EXPECT_EQ(alert_frame(a).dump(), golden("ws_alert.json"));
    EXPECT_EQ(ack_update_frame(1, "ops-1").dump(), golden("ws_ack_update.json"));

    const auto parsed = parse_server_frame(golden("ws_alert.json"));
    EXPECT_EQ(parsed.type, "alert");
    EXPECT_EQ(parsed.alert.id, 1u);
    EXPECT_EQ(parsed.alert.device_id, "edge-01");
    EXPECT_EQ(parsed.alert.reason, AlertReason::Fever);
    const auto upd = parse_server_frame(golden("ws_ack_update.json"));
    EXPECT_EQ(upd.type, "ack_update");
    EXPECT_EQ(upd.alert.acked_by, "ops-1");
}

TEST(WireGolden, ClientFrames)
{
    EXPECT_EQ(subscribe_frame("ops-1").dump(), golden("ws_subscribe.json"));
    EXPECT_EQ(ack_frame(1, "ops-1").dump(), golden("ws_ack.json"));

    const auto sub = parse_client_frame(golden("ws_subscribe.json"));
    ASSERT_TRUE(sub.subscribe.has_value());
    EXPECT_EQ(sub.subscribe->console_id, "ops-1");
    const auto ack = parse_client_frame(golden("ws_ack.json"));
    ASSERT_TRUE(ack.ack.has_value());
    EXPECT_EQ(ack.ack->id, 1u);
    EXPECT_EQ(ack.ack->console_id, "ops-1");

    EXPECT_THROW(parse_client_frame("not json"), ParseError);
    EXPECT_THROW(parse_client_frame(R"({"type":"ack","id":-1,"console_id":"x"})"), ParseError);
    EXPECT_THROW(parse_client_frame(R"({"type":"subscribe","console_id":""})"), ParseError);
    EXPECT_THROW(parse_client_frame(R"({"type":"bogus"})"), ParseError);
}

// The golden frame was written by an independent byte packer: "THRM", version
// 1, width 4, height 3, then 27315 + 37*i little-endian.
TEST(WireGolden, ThermalFileBitExact)
{
    const auto raw = read_file("frame_4x3.thrm");
    const std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
    const auto f = load_frame(bytes, {0, 0});
    ASSERT_EQ(f.width, 4);
    ASSERT_EQ(f.height, 3);
    for (int i = 0; i < 12; ++i) EXPECT_EQ(f.values[static_cast<std::size_t>(i)], 27315 + 37 * i);
    EXPECT_EQ(save_frame(f), bytes);
}
