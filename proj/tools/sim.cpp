// sim: scene generation, calibration point matches, fleet runs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "thermoscreen/fleet.hpp"
#include "thermoscreen/simulator.hpp"

using namespace thermoscreen;
namespace fs = std::filesystem;

namespace {

// Files appear under their final name only once complete.
template <class Write>
void write_atomically(const fs::path& path, Write&& write)
{
    auto tmp = path;
    tmp += ".part";
    write(tmp.string());
    fs::rename(tmp, path);
}

int cmd_gen(const std::string& spec_path, const std::string& out_dir)
{
    std::ifstream in(spec_path);
    if (!in) throw IoError("cannot open " + spec_path);
    const auto batch = sim::scene_batch_from_json(sim::ordered_json::parse(in));
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < batch.scenes.size(); ++i) {
        const auto scene = sim::render_scene(batch.scenes[i]);
        char stem[32];
        std::snprintf(stem, sizeof stem, "scene-%04zu", i);
        const fs::path base = fs::path(out_dir) / stem;
        // Truth first: the agent needs it once the pair is visible.
        write_atomically(fs::path(base).replace_extension(".truth"),
                         [&](const std::string& p) { sim::write_truth_file(p, scene.truth); });
        write_atomically(fs::path(base).replace_extension(".thrm"),
                         [&](const std::string& p) { write_frame_file(p, scene.thermal); });
        write_atomically(fs::path(base).replace_extension(".png"),
                         [&](const std::string& p) { write_png(p, scene.rgb); });
        std::printf("%s faces=%zu\n", base.string().c_str(), scene.truth.faces.size());
    }
    return 0;
}

int cmd_matches(std::uint64_t seed, std::size_t pairs, double noise, std::size_t images, const std::string& out_dir)
{
    sim::SceneSpec spec;
    spec.seed = seed;
    fs::create_directories(out_dir);
    for (std::size_t img = 0; img < images; ++img) {
        const auto set = sim::make_point_matches(spec, pairs, noise, img);
        char name[64];
        std::snprintf(name, sizeof name, "matches-%02zu.txt", img);
        std::ofstream out(fs::path(out_dir) / name);
        write_point_matches(out, set.pairs);
        if (!out) throw IoError("write failed");
        std::printf("%s\n", (fs::path(out_dir) / name).string().c_str());
    }
    return 0;
}

int cmd_fleet(const sim::FleetConfig& cfg, const std::string& report_path)
{
    const auto r = sim::run_fleet(cfg);
    const auto j = sim::to_json(r);
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        out << j.dump(2) << '\n';
        if (!out) throw IoError("cannot write " + report_path);
    }
    std::printf("agents=%zu produced=%llu delivered=%llu dropped=%llu cloud_readings=%llu\n", r.agents.size(),
                static_cast<unsigned long long>(r.produced), static_cast<unsigned long long>(r.delivered),
                static_cast<unsigned long long>(r.dropped), static_cast<unsigned long long>(r.cloud_readings));
    std::printf("fever alerts=%llu expected=%llu latency p50=%.1fms p95=%.1fms conserved=%s\n",
                static_cast<unsigned long long>(r.alerts_received), static_cast<unsigned long long>(r.expected_fever),
                r.latency_p50_ms, r.latency_p95_ms, r.conserved() ? "yes" : "no");
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Simulator: synthetic paired scenes with ground truth, and a fleet driver"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "Render scenes to <stem>.png/<stem>.thrm/<stem>.truth");
    std::string spec, out;
    gen->add_option("--spec", spec, "Scene spec JSON")->required();
    gen->add_option("--out", out, "Output directory")->required();

    auto* matches = app.add_subcommand("matches", "Write hand-marking style point-match files");
    std::uint64_t mseed = 1;
    std::size_t pairs = 10, images = 10;
    double noise = 2.0;
    std::string mout;
    matches->add_option("--seed", mseed)->capture_default_str();
    matches->add_option("--pairs", pairs, "Pairs per image")->capture_default_str();
    matches->add_option("--images", images, "Number of image pairs")->capture_default_str();
    matches->add_option("--noise", noise, "Uniform marking noise, +-px")->capture_default_str();
    matches->add_option("--out", mout, "Output directory")->required();

    auto* fleet = app.add_subcommand("fleet", "Drive N edge agents against a running cloud service");
    sim::FleetConfig fc;
    std::string report;
    fleet->add_option("--agents", fc.agents)->capture_default_str();
    fleet->add_option("--scenes", fc.scenes_per_agent, "Scenes per agent")->capture_default_str();
    fleet->add_option("--faces", fc.faces_per_scene, "Faces per scene")->capture_default_str();
    fleet->add_option("--fever-fraction", fc.fever_fraction)->capture_default_str();
    fleet->add_option("--cloud", fc.cloud_url)->capture_default_str();
    fleet->add_option("--seed", fc.seed)->capture_default_str();
    fleet->add_option("--drop-rate", fc.drop_rate, "Injected request loss")->capture_default_str();
    fleet->add_option("--fever-threshold-c", fc.fever_threshold_c, "Threshold for the expected count")
        ->capture_default_str();
    fleet->add_option("--report", report, "Write the FleetReport JSON here");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_gen(spec, out);
        if (*matches) return cmd_matches(mseed, pairs, noise, images, mout);
        if (*fleet) return cmd_fleet(fc, report);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
    return 0;
}
