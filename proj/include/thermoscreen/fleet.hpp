#pragma once

// Fleet driver: N in-process edge agents, each on its own thread with its own
// calibration, scenes and HTTP connection, plus one console watching alerts.
// The report compares what reached the cloud with the simulator's truth.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "thermoscreen/cloud/wire.hpp"
#include "thermoscreen/cloud/ws_client.hpp"
#include "thermoscreen/edge/agent.hpp"
#include "thermoscreen/simulator.hpp"

namespace thermoscreen::sim {

struct FleetConfig {
    std::size_t agents = 5;
    std::size_t scenes_per_agent = 20;
    std::size_t faces_per_scene = 1;
    double fever_fraction = 0.1;
    double mask_probability = 0.5;
    double thermal_noise_c = 0.1;
    double annotation_noise_px = 2.0;
    std::size_t calibration_images = 10;
    std::string cloud_url = "http://127.0.0.1:8080";
    std::uint64_t seed = 1;
    double drop_rate = 0.0;
    double fever_threshold_c = 37.3;
    double min_face_px = 80.0;
    edge::RetryPolicy retry{std::chrono::milliseconds(50), 2.0, std::chrono::milliseconds(2000), 0.2};
    std::chrono::milliseconds drain_deadline{60000};
    bool watch_alerts = true;
    std::chrono::milliseconds alert_wait{10000};

    void validate() const
    {
        if (agents < 1) throw InvalidSpec("agents must be >= 1");
        if (!(fever_fraction >= 0.0 && fever_fraction <= 1.0)) throw InvalidSpec("fever_fraction in [0, 1]");
        if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw InvalidSpec("drop_rate in [0, 1)");
        if (calibration_images < 1) throw InvalidSpec("calibration_images must be >= 1");
    }
};

struct AgentReport {
    std::string device_id;
    std::uint64_t scenes = 0;
    std::uint64_t truth_faces = 0;
    std::uint64_t produced = 0;
    std::uint64_t delivered = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t dropped = 0;
    std::uint64_t rejected = 0;
    std::uint64_t pending = 0;
    std::uint64_t attempts = 0;
    std::uint64_t skipped = 0;
    std::uint64_t expected_fever = 0;

    bool conserved() const { return delivered + dropped + rejected + pending == produced; }
};

struct FleetReport {
    std::vector<AgentReport> agents;
    std::uint64_t truth_faces = 0;
    std::uint64_t produced = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped = 0;
    std::uint64_t rejected = 0;
    std::uint64_t pending = 0;
    std::uint64_t expected_fever = 0;   // truth faces with core >= threshold
    std::uint64_t alerts_received = 0;  // FEVER alerts seen by the console for fleet devices
    std::uint64_t cloud_readings = 0;   // fleet-device records stored in the cloud
    std::uint64_t missed_faces = 0;
    std::uint64_t mask_mismatches = 0;
    double max_temperature_error_c = 0.0;
    double latency_p50_ms = 0.0;
    double latency_p95_ms = 0.0;
    double latency_max_ms = 0.0;
    double wall_seconds = 0.0;

    bool conserved() const
    {
        return std::ranges::all_of(agents, [](const AgentReport& a) { return a.conserved(); });
    }
};

inline nlohmann::ordered_json to_json(const FleetReport& r)
{
    nlohmann::ordered_json agents = nlohmann::ordered_json::array();
    for (const auto& a : r.agents)
        agents.push_back({{"device_id", a.device_id}, {"scenes", a.scenes},       {"truth_faces", a.truth_faces},
                          {"produced", a.produced},   {"delivered", a.delivered}, {"duplicates", a.duplicates},
                          {"dropped", a.dropped},     {"rejected", a.rejected},   {"pending", a.pending},
                          {"attempts", a.attempts},   {"skipped", a.skipped},     {"expected_fever", a.expected_fever}});
    return {{"truth_faces", r.truth_faces},
            {"produced", r.produced},
            {"delivered", r.delivered},
            {"dropped", r.dropped},
            {"rejected", r.rejected},
            {"pending", r.pending},
            {"expected_fever", r.expected_fever},
            {"alerts_received", r.alerts_received},
            {"cloud_readings", r.cloud_readings},
            {"missed_faces", r.missed_faces},
            {"mask_mismatches", r.mask_mismatches},
            {"max_temperature_error_c", r.max_temperature_error_c},
            {"latency_ms", {{"p50", r.latency_p50_ms}, {"p95", r.latency_p95_ms}, {"max", r.latency_max_ms}}},
            {"conserved", r.conserved()},
            {"wall_seconds", r.wall_seconds},
            {"agents", std::move(agents)}};
}

// Nearest-rank percentile of `v` (sorted in place); 0 for an empty sample.
inline double percentile_ms(std::vector<double>& v, double q)
{
    if (v.empty()) return 0.0;
    std::ranges::sort(v);
    auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(v.size())));
    return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

inline std::string fleet_device_id(std::uint64_t seed, std::size_t agent)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "fleet-%llu-%02zu", static_cast<unsigned long long>(seed), agent);
    return buf;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0)
{
    return thermoscreen::detail::splitmix64(a ^ thermoscreen::detail::splitmix64(b ^ thermoscreen::detail::splitmix64(c)));
}

// Every record the cloud holds for one device, paging by last id.
inline std::vector<cloud::StoreRecord> fetch_device_records(const std::string& cloud_url, const std::string& device_id)
{
    httplib::Client cli(cloud_url);
    cli.set_read_timeout(std::chrono::seconds(10));
    std::vector<cloud::StoreRecord> out;
    std::uint64_t after = 0;
    for (;;) {
        const auto path = "/api/v1/readings?device_id=" + device_id + "&limit=1000&after_id=" + std::to_string(after);
        auto res = cli.Get(path);
        if (!res || res->status != 200) throw CloudUnreachable("GET " + path + " failed");
        const auto j = nlohmann::json::parse(res->body);
        for (const auto& r : j.at("records")) {
            cloud::StoreRecord rec;
            rec.id = r.at("id").get<std::uint64_t>();
            rec.server_received_ms = r.at("server_received_ms").get<std::uint64_t>();
            rec.reading = *parse_reading(r).reading;
            out.push_back(std::move(rec));
        }
        if (j.at("next_after_id").is_null()) break;
        after = j.at("next_after_id").get<std::uint64_t>();
    }
    return out;
}

inline void check_cloud(const std::string& cloud_url)
{
    httplib::Client cli(cloud_url);
    cli.set_connection_timeout(std::chrono::seconds(2));
    auto res = cli.Get("/api/v1/health");
    if (!res || res->status != 200) throw CloudUnreachable("no healthy cloud at " + cloud_url);
}

namespace detail {

struct UrlParts {
    std::string host;
    unsigned short port = 80;
};

inline UrlParts split_url(const std::string& url)
{
    auto rest = url;
    if (auto p = rest.find("://"); p != std::string::npos) rest = rest.substr(p + 3);
    if (auto p = rest.find('/'); p != std::string::npos) rest = rest.substr(0, p);
    UrlParts u;
    const auto colon = rest.rfind(':');
    u.host = colon == std::string::npos ? rest : rest.substr(0, colon);
    if (colon != std::string::npos) u.port = static_cast<unsigned short>(std::stoi(rest.substr(colon + 1)));
    return u;
}

// Per-agent matching of readings to the truth faces of the same scene.
struct SceneScore {
    std::uint64_t missed = 0;
    std::uint64_t mask_mismatches = 0;
    double max_error = 0.0;
};

inline SceneScore score_scene(const GroundTruth& truth, const std::vector<edge::FaceReading>& readings)
{
    SceneScore s;
    for (const auto& face : truth.faces) {
        const edge::FaceReading* best = nullptr;
        double best_iou = 0.0;
        for (const auto& r : readings) {
            const double v = iou(face.bbox, r.detection.bbox);
            if (v > best_iou) {
                best_iou = v;
                best = &r;
            }
        }
        if (best == nullptr || best_iou < 0.5) {
            ++s.missed;
            continue;
        }
        s.max_error = std::max(s.max_error, std::abs(best->reading.temperature_c - face.core_temp_c));
        if (best->reading.mask_worn != face.mask_worn) ++s.mask_mismatches;
    }
    return s;
}

}  // namespace detail

// Calibrates a device the way an operator would: RANSAC over hand-marked
// (noisy) point matches from several image pairs.
inline AffineTransform calibrate_device(const FleetConfig& cfg, std::size_t agent)
{
    SceneSpec spec;
    spec.seed = mix_seed(cfg.seed, agent, 0xca1b);
    PointMatchSet set;
    for (std::size_t img = 0; img < cfg.calibration_images; ++img) {
        const auto s = make_point_matches(spec, 10, cfg.annotation_noise_px, img);
        set.pairs.insert(set.pairs.end(), s.pairs.begin(), s.pairs.end());
    }
    return estimate_affine_ransac(set).transform;
}

inline FleetReport run_fleet(const FleetConfig& cfg)
{
    cfg.validate();
    check_cloud(cfg.cloud_url);
    const auto started = std::chrono::steady_clock::now();

    std::set<std::string> devices;
    for (std::size_t i = 0; i < cfg.agents; ++i) devices.insert(fleet_device_id(cfg.seed, i));

    std::unique_ptr<cloud::WsClient> console;
    if (cfg.watch_alerts) {
        const auto u = detail::split_url(cfg.cloud_url);
        console = std::make_unique<cloud::WsClient>(u.host, u.port);
        console->send(cloud::subscribe_frame("fleet-" + std::to_string(cfg.seed)).dump());
    }

    FleetReport report;
    report.agents.resize(cfg.agents);
    std::vector<std::vector<double>> latencies(cfg.agents);
    std::vector<detail::SceneScore> scores(cfg.agents);
    std::vector<std::exception_ptr> errors(cfg.agents);

    auto work = [&](std::size_t i) {
        try {
            edge::AgentConfig ac;
            ac.device_id = fleet_device_id(cfg.seed, i);
            ac.location = {22.30 + 0.01 * static_cast<double>(i), 114.17};
            ac.cloud_url = cfg.cloud_url;
            ac.retry = cfg.retry;
            ac.drain_deadline = cfg.drain_deadline;
            ac.cascade.min_face_px = cfg.min_face_px;
            ac.detector_seed = mix_seed(cfg.seed, i, 0xde7);
            ac.validate();

            std::shared_ptr<edge::Transport> transport =
                std::make_shared<edge::HttpTransport>(cfg.cloud_url, ac.request_timeout);
            if (cfg.drop_rate > 0.0)
                transport = std::make_shared<edge::FaultInjectingTransport>(transport, cfg.drop_rate,
                                                                            mix_seed(cfg.seed, i, 0xd409));
            std::mutex lat_mu;
            auto on_outcome = [&](const TemperatureReading&, edge::UploadOutcome o, edge::Uploader::Clock::time_point t0) {
                if (o != edge::UploadOutcome::Ack) return;
                const double ms =
                    std::chrono::duration<double, std::milli>(edge::Uploader::Clock::now() - t0).count();
                std::lock_guard lock(lat_mu);
                latencies[i].push_back(ms);
            };
            edge::EdgeAgent agent(ac, calibrate_device(cfg, i), transport, on_outcome);

            auto& rep = report.agents[i];
            rep.device_id = ac.device_id;
            SceneOptions opt;
            opt.n_faces = cfg.faces_per_scene;
            opt.fever_fraction = cfg.fever_fraction;
            opt.mask_probability = cfg.mask_probability;
            opt.thermal_noise_c = cfg.thermal_noise_c;
            for (std::size_t k = 0; k < cfg.scenes_per_agent; ++k) {
                const auto scene = render_scene(random_scene(mix_seed(cfg.seed, i, k + 1), opt));
                for (const auto& f : scene.truth.faces)
                    if (f.core_temp_c >= cfg.fever_threshold_c) ++rep.expected_fever;
                rep.truth_faces += scene.truth.faces.size();
                const MockDetector detector(scene.truth.detector_truth(), ac.detector_noise, ac.detector_seed);
                const std::uint64_t ts = 1'700'000'000'000ULL + i * 1'000'000ULL + k * 1000ULL;
                const auto captured = edge::Uploader::Clock::now();
                const auto readings = agent.handle_pair(scene.rgb, scene.thermal, detector.scorers(), ts, captured);
                const auto s = detail::score_scene(scene.truth, readings);
                scores[i].missed += s.missed;
                scores[i].mask_mismatches += s.mask_mismatches;
                scores[i].max_error = std::max(scores[i].max_error, s.max_error);
                ++rep.scenes;
            }
            agent.shutdown();
            const auto st = agent.upload_stats();
            rep.produced = st.produced;
            rep.delivered = st.delivered;
            rep.duplicates = st.duplicates;
            rep.dropped = st.dropped;
            rep.rejected = st.rejected;
            rep.pending = st.pending;
            rep.attempts = st.attempts;
            rep.skipped = agent.counters().skipped_degenerate + agent.counters().skipped_out_of_frame;
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };

    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < cfg.agents; ++i) threads.emplace_back(work, i);
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<double> all_latency;
    for (std::size_t i = 0; i < cfg.agents; ++i) {
        const auto& a = report.agents[i];
        report.truth_faces += a.truth_faces;
        report.produced += a.produced;
        report.delivered += a.delivered;
        report.dropped += a.dropped;
        report.rejected += a.rejected;
        report.pending += a.pending;
        report.expected_fever += a.expected_fever;
        report.missed_faces += scores[i].missed;
        report.mask_mismatches += scores[i].mask_mismatches;
        report.max_temperature_error_c = std::max(report.max_temperature_error_c, scores[i].max_error);
        all_latency.insert(all_latency.end(), latencies[i].begin(), latencies[i].end());
    }
    report.latency_p50_ms = percentile_ms(all_latency, 50);
    report.latency_p95_ms = percentile_ms(all_latency, 95);
    report.latency_max_ms = all_latency.empty() ? 0.0 : all_latency.back();

    for (const auto& d : devices) report.cloud_readings += fetch_device_records(cfg.cloud_url, d).size();

    if (console) {
        // Alerts for fleet devices, deduplicated by id. Waits for the expected
        // number, then a short grace period to catch any surplus.
        std::set<std::uint64_t> seen;
        auto take = [&](std::chrono::milliseconds timeout) {
            auto f = console->next(timeout);
            if (!f) return false;
            const auto frame = cloud::parse_server_frame(*f);
            if (frame.type == "alert" && frame.alert.reason == cloud::AlertReason::Fever &&
                devices.contains(frame.alert.device_id))
                seen.insert(frame.alert.id);
            return true;
        };
        const auto deadline = std::chrono::steady_clock::now() + cfg.alert_wait;
        while (seen.size() < report.expected_fever && std::chrono::steady_clock::now() < deadline)
            take(std::chrono::milliseconds(100));
        while (take(std::chrono::milliseconds(300))) {}
        report.alerts_received = seen.size();
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

}  // namespace thermoscreen::sim
