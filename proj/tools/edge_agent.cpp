// edge-agent: run | calibrate | process

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "thermoscreen/edge/agent.hpp"
#include "thermoscreen/simulator.hpp"

using namespace thermoscreen;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCalibration = 3;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::uint64_t now_ms()
{
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
            .count());
}

// Timestamp from `<stem>.meta` when present, otherwise the wall clock.
std::uint64_t pair_timestamp(const fs::path& thermal)
{
    auto meta = thermal;
    meta.replace_extension(".meta");
    std::ifstream in(meta);
    if (!in) return now_ms();
    const auto m = parse_metadata(in);
    return m.timestamp_ms != 0 ? m.timestamp_ms : now_ms();
}

// The mock detector needs the scene's truth file; without it the pair cannot
// be scored.
std::optional<sim::GroundTruth> pair_truth(const fs::path& rgb)
{
    auto p = rgb;
    p.replace_extension(".truth");
    if (!fs::exists(p)) return std::nullopt;
    return sim::read_truth_file(p.string());
}

void print_reading(std::ostream& os, const edge::FaceReading& fr)
{
    const auto& r = fr.reading;
    char line[256];
    std::snprintf(line, sizeof line, "seq=%llu temperature=%.2fC (%s, +-%.1fC) mask=%s alignment_ok=%s face=[%.0f,%.0f %.0fx%.0f]",
                  static_cast<unsigned long long>(r.seq), r.temperature_c, fr.estimate.method.c_str(),
                  fr.estimate.uncertainty_c, r.mask_worn ? "yes" : "no", r.alignment_ok ? "yes" : "no",
                  fr.detection.bbox.left, fr.detection.bbox.top, fr.detection.bbox.width, fr.detection.bbox.height);
    os << line << '\n';
}

int cmd_calibrate(const std::vector<std::string>& match_files, const std::string& out, double threshold)
{
    PointMatchSet set;
    for (const auto& f : match_files) {
        std::ifstream in(f);
        if (!in) throw IoError("cannot open " + f);
        const auto pairs = parse_point_matches(in);
        set.pairs.insert(set.pairs.end(), pairs.begin(), pairs.end());
    }
    RansacConfig cfg;
    cfg.inlier_threshold_px = threshold;
    const auto r = estimate_affine_ransac(set, cfg);
    save_transform(out, r.transform);
    std::printf("pairs=%zu inliers=%zu iterations=%d\n", set.pairs.size(), r.inlier_count, r.iterations);
    std::printf("a1=%.6f a2=%.6f tx=%.4f\na3=%.6f a4=%.6f ty=%.4f\n", r.transform.a1, r.transform.a2, r.transform.tx,
                r.transform.a3, r.transform.a4, r.transform.ty);
    return kExitOk;
}

int cmd_process(const std::string& config_path, const std::string& transform_path, const std::string& rgb_path,
                const std::string& thermal_path)
{
    edge::AgentConfig cfg;
    cfg.device_id = "local";
    if (!config_path.empty()) cfg = edge::load_agent_config(config_path);
    const auto tpath = transform_path.empty() ? cfg.transform_path : transform_path;
    if (tpath.empty()) throw CalibrationMissing("no transform given (--transform or transform_path)");
    edge::PipelineState state;
    state.device_id = cfg.device_id;
    state.location = cfg.location;
    state.transform = load_transform(tpath);

    const auto rgb = read_png(rgb_path);
    const auto thermal = read_frame_file(thermal_path);
    const auto truth = pair_truth(rgb_path);
    if (!truth) throw IoError("no ground truth next to " + rgb_path + " for the mock detector");
    const MockDetector detector(truth->detector_truth(), cfg.detector_noise, cfg.detector_seed);
    const auto readings = edge::process_pair(rgb, thermal, detector.scorers(), edge::PipelineConfig::from(cfg), state,
                                             pair_timestamp(thermal_path));
    std::printf("faces=%llu readings=%zu skipped=%llu\n", static_cast<unsigned long long>(state.counters.faces),
                readings.size(),
                static_cast<unsigned long long>(state.counters.skipped_degenerate +
                                                state.counters.skipped_out_of_frame));
    if (readings.empty()) std::printf("no face found: retake\n");
    for (const auto& fr : readings) print_reading(std::cout, fr);
    return kExitOk;
}

int cmd_run(const std::string& config_path, bool once)
{
    const auto cfg = edge::load_agent_config(config_path);
    if (cfg.watch_dir.empty()) throw InvalidConfig("watch_dir is required for run");
    if (cfg.transform_path.empty()) throw CalibrationMissing("transform_path is not set");
    const auto transform = load_transform(cfg.transform_path);

    auto transport = std::make_shared<edge::HttpTransport>(cfg.cloud_url, cfg.request_timeout);
    edge::EdgeAgent agent(cfg, transform, transport, [](const TemperatureReading& r, edge::UploadOutcome o, auto) {
        std::fprintf(stderr, "upload seq=%llu %s\n", static_cast<unsigned long long>(r.seq), edge::outcome_name(o));
    });
    edge::PairTracker tracker(cfg.pairing_timeout);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::fprintf(stderr, "watching %s, uploading to %s as %s\n", cfg.watch_dir.c_str(), cfg.cloud_url.c_str(),
                 cfg.device_id.c_str());

    while (!g_stop) {
        // --once treats every unpaired file as expired immediately.
        const auto now = once ? edge::PairTracker::Clock::now() + cfg.pairing_timeout : edge::PairTracker::Clock::now();
        const auto poll = edge::poll_directory(tracker, cfg.watch_dir, now);
        for (const auto& stem : poll.expired) std::fprintf(stderr, "unpaired %s: partner never arrived\n", stem.c_str());
        for (const auto& p : poll.ready) {
            try {
                const auto truth = pair_truth(p.rgb);
                if (!truth) {
                    std::fprintf(stderr, "%s: no ground truth for the mock detector, skipped\n", p.stem.c_str());
                    continue;
                }
                const auto rgb = read_png(p.rgb.string());
                const auto thermal = read_frame_file(p.thermal.string());
                const MockDetector detector(truth->detector_truth(), cfg.detector_noise, cfg.detector_seed);
                const auto readings = agent.handle_pair(rgb, thermal, detector.scorers(), pair_timestamp(p.thermal));
                std::printf("%s: %zu reading(s)\n", p.stem.c_str(), readings.size());
                for (const auto& fr : readings) print_reading(std::cout, fr);
                std::fflush(stdout);
            } catch (const CalibrationMissing&) {
                throw;
            } catch (const Error& e) {
                std::fprintf(stderr, "%s: %s\n", p.stem.c_str(), e.what());
            }
        }
        if (once) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
    }
    agent.shutdown();
    const auto st = agent.upload_stats();
    std::fprintf(stderr, "produced=%llu delivered=%llu dropped=%llu rejected=%llu pending=%llu\n",
                 static_cast<unsigned long long>(st.produced), static_cast<unsigned long long>(st.delivered),
                 static_cast<unsigned long long>(st.dropped), static_cast<unsigned long long>(st.rejected),
                 static_cast<unsigned long long>(st.pending));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Edge agent: pairs RGB/thermal frames, measures forehead temperature, uploads readings"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Watch a directory of <stem>.png/<stem>.thrm pairs and upload readings");
    std::string run_config;
    bool once = false;
    run->add_option("--config", run_config, "Agent config file (key = value)")->required();
    run->add_flag("--once", once, "Process the pairs present now, drain the queue and exit");

    auto* cal = app.add_subcommand("calibrate", "Estimate the RGB->thermal affine transform from point matches");
    std::vector<std::string> matches;
    std::string out;
    double threshold = 3.0;
    cal->add_option("--matches", matches, "Point-match files (x_rgb y_rgb x_thermal y_thermal per line)")
        ->required()
        ->expected(1, -1);
    cal->add_option("--out", out, "Transform file to write")->required();
    cal->add_option("--threshold", threshold, "Inlier threshold in thermal pixels");

    auto* proc = app.add_subcommand("process", "Measure one image pair and print the readings");
    std::string rgb, thermal, proc_config, transform;
    proc->add_option("--rgb", rgb, "RGB image (PNG)")->required();
    proc->add_option("--thermal", thermal, "Thermal frame (.thrm)")->required();
    proc->add_option("--config", proc_config, "Agent config file");
    proc->add_option("--transform", transform, "Transform file (overrides transform_path)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(run_config, once);
        if (*cal) return cmd_calibrate(matches, out, threshold);
        if (*proc) return cmd_process(proc_config, transform, rgb, thermal);
    } catch (const InvalidConfig& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitConfig;
    } catch (const CalibrationMissing& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitCalibration;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitFailure;
    }
    return kExitOk;
}
