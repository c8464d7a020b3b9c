#pragma once

// One device: the pipeline (caller's thread) feeding the uploader (worker
// thread) through the bounded queue, plus the directory pairing logic used by
// `edge-agent run`.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "thermoscreen/edge/config.hpp"
#include "thermoscreen/edge/pipeline.hpp"
#include "thermoscreen/edge/transport.hpp"
#include "thermoscreen/edge/uploader.hpp"

namespace thermoscreen::edge {

class EdgeAgent {
public:
    using Clock = Uploader::Clock;

    EdgeAgent(const AgentConfig& cfg, const AffineTransform& transform, std::shared_ptr<Transport> transport,
              Uploader::OutcomeCallback on_outcome = {})
        : cfg_(cfg),
          pipeline_(PipelineConfig::from(cfg)),
          uploader_(std::move(transport), {cfg.queue_capacity, cfg.retry, cfg.detector_seed ^ 0x75706c64ULL},
                    std::move(on_outcome))
    {
        state_.device_id = cfg.device_id;
        state_.location = cfg.location;
        state_.transform = transform;
    }

    // Not thread-safe: the pipeline is single-threaded per device.
    std::vector<FaceReading> handle_pair(const RgbImage& rgb, const ThermalFrame& thermal,
                                         const CascadeScorers& scorers, std::uint64_t timestamp_ms,
                                         Clock::time_point captured = Clock::now())
    {
        auto readings = process_pair(rgb, thermal, scorers, pipeline_, state_, timestamp_ms);
        for (const auto& fr : readings) uploader_.submit(fr.reading, captured);
        return readings;
    }

    void shutdown() { uploader_.shutdown(cfg_.drain_deadline); }
    bool wait_idle(std::chrono::milliseconds timeout) { return uploader_.wait_idle(timeout); }

    const PipelineCounters& counters() const { return state_.counters; }
    UploaderStats upload_stats() const { return uploader_.stats(); }
    const AgentConfig& config() const { return cfg_; }

private:
    AgentConfig cfg_;
    PipelineConfig pipeline_;
    PipelineState state_;
    Uploader uploader_;
};

// Pairs `<stem>.png` with `<stem>.thrm` in a directory. A stem whose partner
// has not appeared within the pairing timeout is given up on. Producers should
// write files under another name and rename them into place.
class PairTracker {
public:
    using Clock = std::chrono::steady_clock;

    struct Pair {
        std::string stem;
        std::filesystem::path rgb;
        std::filesystem::path thermal;
    };

    struct Poll {
        std::vector<Pair> ready;          // both halves present, in stem order
        std::vector<std::string> expired;  // partner never arrived
    };

    explicit PairTracker(std::chrono::milliseconds timeout) : timeout_(timeout) {}

    // `present` maps stem -> which halves exist right now.
    Poll update(const std::map<std::string, std::pair<bool, bool>>& present, Clock::time_point now)
    {
        Poll out;
        for (const auto& [stem, halves] : present) {
            if (done_.contains(stem)) continue;
            auto [it, fresh] = first_seen_.try_emplace(stem, now);
            if (halves.first && halves.second) {
                out.ready.push_back({stem, {}, {}});
                done_.emplace(stem, true);
                first_seen_.erase(it);
            } else if (now - it->second >= timeout_) {
                out.expired.push_back(stem);
                done_.emplace(stem, false);
                first_seen_.erase(it);
            }
        }
        return out;
    }

private:
    std::chrono::milliseconds timeout_;
    std::map<std::string, Clock::time_point> first_seen_;
    std::map<std::string, bool> done_;
};

inline PairTracker::Poll poll_directory(PairTracker& tracker, const std::filesystem::path& dir,
                                        PairTracker::Clock::time_point now = PairTracker::Clock::now())
{
    std::map<std::string, std::pair<bool, bool>> present;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        const auto stem = entry.path().stem().string();
        if (ext == ".png") present[stem].first = true;
        else if (ext == ".thrm") present[stem].second = true;
    }
    auto poll = tracker.update(present, now);
    for (auto& p : poll.ready) {
        p.rgb = dir / (p.stem + ".png");
        p.thermal = dir / (p.stem + ".thrm");
    }
    return poll;
}

}  // namespace thermoscreen::edge
