#pragma once

// Capture-to-decision path: cascade -> forehead point -> ROI -> thermal ROI ->
// temperature, one TemperatureReading per usable face.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "thermoscreen/detection.hpp"
#include "thermoscreen/edge/config.hpp"
#include "thermoscreen/error.hpp"
#include "thermoscreen/geometry.hpp"
#include "thermoscreen/image.hpp"
#include "thermoscreen/reading.hpp"
#include "thermoscreen/thermal.hpp"

namespace thermoscreen::edge {

struct PipelineConfig {
    CascadeConfig cascade;
    ForeheadRoiConfig roi;
    TemperatureConfig temperature;
    double mask_threshold = 0.5;

    static PipelineConfig from(const AgentConfig& c) { return {c.cascade, c.roi, c.temperature, c.mask_threshold}; }
};

struct PipelineCounters {
    std::uint64_t pairs = 0;
    std::uint64_t empty_pairs = 0;  // no face found, nothing uploaded
    std::uint64_t faces = 0;
    std::uint64_t readings = 0;
    std::uint64_t skipped_degenerate = 0;
    std::uint64_t skipped_out_of_frame = 0;
    std::uint64_t flagged_invalid = 0;  // temperature outside the valid band
};

// Per-device state carried across pairs.
struct PipelineState {
    std::string device_id;
    Location location;
    std::optional<AffineTransform> transform;
    std::uint64_t next_seq = 1;
    PipelineCounters counters;
};

struct FaceReading {
    TemperatureReading reading;
    FaceDetection detection;
    Point2 forehead_rgb;
    BBox rgb_roi;
    BBox thermal_roi;
    TemperatureEstimate estimate;
};

inline std::vector<FaceReading> process_pair(const RgbImage& rgb, const ThermalFrame& thermal,
                                             const CascadeScorers& scorers, const PipelineConfig& cfg,
                                             PipelineState& state, std::uint64_t timestamp_ms)
{
    if (!state.transform) throw CalibrationMissing("no calibrated transform loaded");
    ++state.counters.pairs;
    const auto detections = run_cascade(rgb, scorers, cfg.cascade);
    if (detections.empty()) {
        ++state.counters.empty_pairs;
        return {};
    }
    std::vector<FaceReading> out;
    for (const auto& det : detections) {
        ++state.counters.faces;
        FaceReading fr;
        fr.detection = det;
        try {
            fr.forehead_rgb = forehead_center(det.bbox, det.landmarks.left_eye, det.landmarks.right_eye);
            fr.rgb_roi = forehead_roi(fr.forehead_rgb, det.bbox, cfg.roi, rgb.size());
            fr.thermal_roi = rgb_roi_to_thermal(fr.rgb_roi, *state.transform, thermal.size());
            fr.estimate = extract_temperature(thermal, fr.thermal_roi, cfg.temperature);
        } catch (const DegenerateGeometry&) {
            ++state.counters.skipped_degenerate;
            continue;
        } catch (const OutOfFrame&) {
            ++state.counters.skipped_out_of_frame;
            continue;
        } catch (const EmptyRoi&) {
            ++state.counters.skipped_out_of_frame;
            continue;
        }
        auto& r = fr.reading;
        r.device_id = state.device_id;
        r.seq = state.next_seq++;
        r.timestamp_ms = timestamp_ms;
        r.location = state.location;
        r.temperature_c = fr.estimate.celsius;
        r.mask_worn = det.mask_score >= cfg.mask_threshold;
        r.alignment_ok = r.temperature_c >= kValidReadingLowC && r.temperature_c <= kValidReadingHighC;
        if (!r.alignment_ok) ++state.counters.flagged_invalid;
        ++state.counters.readings;
        out.push_back(std::move(fr));
    }
    return out;
}

}  // namespace thermoscreen::edge
