#pragma once

// Synthetic ground truth: paired RGB/thermal scenes with a known RGB->thermal
// affine map, fiducial faces with exact landmarks and mask state, and a
// forehead hotspot at the image of the true measurement point. Also emulates
// hand-marked point matches for calibration.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "thermoscreen/detection.hpp"
#include "thermoscreen/error.hpp"
#include "thermoscreen/geometry.hpp"
#include "thermoscreen/image.hpp"
#include "thermoscreen/thermal.hpp"

namespace thermoscreen::sim {

struct FaceSpec {
    BBox bbox;
    Landmarks5 landmarks;
    bool mask_worn = false;
    double core_temp_c = 36.8;
};

struct SceneSpec {
    std::uint64_t seed = 1;
    AffineTransform true_transform = kFlirOneProTransform;
    std::vector<FaceSpec> faces;
    double annotation_noise_px = 0.0;
    double thermal_noise_c = 0.0;
    double ambient_c = 22.0;
    std::string device_id = "sim";
    std::uint64_t timestamp_ms = 0;

    void validate() const
    {
        if (!true_transform.finite() || !(std::abs(true_transform.det()) > 1e-12))
            throw InvalidSpec("true_transform must be finite and invertible");
        if (annotation_noise_px < 0.0 || thermal_noise_c < 0.0)
            throw InvalidSpec("noise must be non-negative");
        const BBox frame{0, 0, static_cast<double>(kRgbFrame.width), static_cast<double>(kRgbFrame.height)};
        for (const auto& f : faces) {
            if (!f.bbox.valid()) throw InvalidSpec("face box must have positive size");
            if (f.bbox.left < 0 || f.bbox.top < 0 || f.bbox.right() > frame.width ||
                f.bbox.bottom() > frame.height)
                throw InvalidSpec("face outside the 1440x1080 rgb frame");
            if (!(f.core_temp_c >= 30.0 && f.core_temp_c <= 43.0))
                throw InvalidSpec("core_temp_c must be in [30, 43]");
            if (!f.landmarks.finite()) throw InvalidSpec("non-finite landmark");
            for (const auto& p : f.landmarks.points())
                if (!f.bbox.contains(p)) throw InvalidSpec("landmark outside face box");
        }
    }
};

struct FaceTruth {
    BBox bbox;
    Landmarks5 landmarks;
    bool mask_worn = false;
    double core_temp_c = 0.0;
    std::optional<Point2> forehead_rgb;  // empty when the eye geometry is degenerate
    Point2 hotspot_thermal;              // hotspot center in thermal pixels
};

struct GroundTruth {
    std::uint64_t seed = 0;
    AffineTransform true_transform;
    double ambient_c = 0.0;
    double thermal_noise_c = 0.0;
    std::vector<FaceTruth> faces;

    std::vector<TruthFace> detector_truth() const
    {
        std::vector<TruthFace> out;
        for (const auto& f : faces) out.push_back({f.bbox, f.landmarks, f.mask_worn});
        return out;
    }
};

struct Scene {
    RgbImage rgb;
    ThermalFrame thermal;
    GroundTruth truth;
};

// Hotspot profile: flat top of this radius at the core temperature, then a
// Gaussian shoulder down to ambient.
inline constexpr double kHotspotPlateauPx = 6.0;
inline constexpr double kHotspotSigmaPx = 8.0;

inline double hotspot_weight(double r)
{
    if (r <= kHotspotPlateauPx) return 1.0;
    const double d = r - kHotspotPlateauPx;
    return std::exp(-d * d / (2.0 * kHotspotSigmaPx * kHotspotSigmaPx));
}

namespace detail {

inline void fill_ellipse(RgbImage& img, const BBox& b, Rgb c)
{
    const Point2 ctr = b.center();
    const double rx = b.width / 2.0, ry = b.height / 2.0;
    const int y0 = std::max(0, static_cast<int>(b.top)), y1 = std::min(img.height(), static_cast<int>(std::ceil(b.bottom())));
    const int x0 = std::max(0, static_cast<int>(b.left)), x1 = std::min(img.width(), static_cast<int>(std::ceil(b.right())));
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const double dx = (x + 0.5 - ctr.x) / rx, dy = (y + 0.5 - ctr.y) / ry;
            if (dx * dx + dy * dy <= 1.0) img.set(x, y, c);
        }
}

inline void fill_disc(RgbImage& img, const Point2& p, double r, Rgb c)
{
    fill_ellipse(img, {p.x - r, p.y - r, 2 * r, 2 * r}, c);
}

inline void fill_rect(RgbImage& img, const BBox& b, Rgb c)
{
    const int y0 = std::max(0, static_cast<int>(b.top)), y1 = std::min(img.height(), static_cast<int>(std::ceil(b.bottom())));
    const int x0 = std::max(0, static_cast<int>(b.left)), x1 = std::min(img.width(), static_cast<int>(std::ceil(b.right())));
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) img.set(x, y, c);
}

}  // namespace detail

inline Scene render_scene(const SceneSpec& spec)
{
    spec.validate();
    Scene scene;
    scene.truth.seed = spec.seed;
    scene.truth.true_transform = spec.true_transform;
    scene.truth.ambient_c = spec.ambient_c;
    scene.truth.thermal_noise_c = spec.thermal_noise_c;

    scene.rgb = RgbImage(kRgbFrame.width, kRgbFrame.height, {70, 80, 92});
    for (const auto& f : spec.faces) {
        FaceTruth t{f.bbox, f.landmarks, f.mask_worn, f.core_temp_c, std::nullopt, {}};
        try {
            t.forehead_rgb = forehead_center(f.bbox, f.landmarks.left_eye, f.landmarks.right_eye);
        } catch (const DegenerateGeometry&) {
        }
        const Point2 anchor = t.forehead_rgb.value_or(
            Point2{(f.landmarks.left_eye.x + f.landmarks.right_eye.x) / 2.0, f.bbox.top + 0.2 * f.bbox.height});
        t.hotspot_thermal = apply(spec.true_transform, anchor);
        scene.truth.faces.push_back(t);

        const double r = std::max(2.0, 0.035 * f.bbox.width);
        detail::fill_ellipse(scene.rgb, f.bbox, {224, 172, 128});
        if (f.mask_worn) {
            const double top = f.landmarks.nose.y - 0.05 * f.bbox.height;
            detail::fill_rect(scene.rgb, {f.bbox.left + 0.12 * f.bbox.width, top, 0.76 * f.bbox.width,
                                          f.bbox.bottom() - 0.08 * f.bbox.height - top},
                              {150, 200, 235});
        }
        detail::fill_disc(scene.rgb, f.landmarks.left_eye, r, {30, 30, 40});
        detail::fill_disc(scene.rgb, f.landmarks.right_eye, r, {30, 30, 40});
        detail::fill_disc(scene.rgb, f.landmarks.nose, r * 0.8, {200, 60, 60});
        detail::fill_disc(scene.rgb, f.landmarks.mouth_left, r * 0.7, {120, 20, 40});
        detail::fill_disc(scene.rgb, f.landmarks.mouth_right, r * 0.7, {120, 20, 40});
    }

    scene.thermal = ThermalFrame::filled(kThermalFrame, 0);
    scene.thermal.meta = {spec.device_id, spec.timestamp_ms, 0.98};
    std::mt19937_64 rng(spec.seed ^ 0x7468726dULL);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int y = 0; y < kThermalFrame.height; ++y) {
        for (int x = 0; x < kThermalFrame.width; ++x) {
            double c = spec.ambient_c;
            for (const auto& t : scene.truth.faces) {
                const double rr = std::hypot(x + 0.5 - t.hotspot_thermal.x, y + 0.5 - t.hotspot_thermal.y);
                c = std::max(c, spec.ambient_c + (t.core_temp_c - spec.ambient_c) * hotspot_weight(rr));
            }
            if (spec.thermal_noise_c > 0.0) c += spec.thermal_noise_c * noise(rng);
            scene.thermal.at(x, y) = celsius_to_centikelvin(c);
        }
    }
    return scene;
}

// Emulated hand marking: RGB points whose images fall inside the thermal frame,
// mapped through the true transform, then both sides perturbed by uniform
// +-noise_px. `stream` selects an independent draw for the same scene seed.
inline PointMatchSet make_point_matches(const SceneSpec& spec, std::size_t n_pairs, double noise_px,
                                        std::uint64_t stream = 0)
{
    if (n_pairs < 3) throw InvalidSpec("need at least 3 point pairs");
    if (!(noise_px >= 0.0)) throw InvalidSpec("noise must be non-negative");
    if (!spec.true_transform.finite() || !(std::abs(spec.true_transform.det()) > 1e-12))
        throw InvalidSpec("true_transform must be finite and invertible");

    std::mt19937_64 rng(thermoscreen::detail::splitmix64(spec.seed) ^ thermoscreen::detail::splitmix64(stream + 0x6d61746368ULL));
    std::uniform_real_distribution<double> ux(0.0, kRgbFrame.width), uy(0.0, kRgbFrame.height);
    std::uniform_real_distribution<double> jitter(-noise_px, noise_px);
    const double margin = noise_px + 1.0;

    PointMatchSet set;
    for (int attempts = 0; set.pairs.size() < n_pairs; ++attempts) {
        if (attempts > 1'000'000) throw InvalidSpec("transform leaves no overlap between frames");
        const Point2 p{ux(rng), uy(rng)};
        if (p.x < margin || p.y < margin || p.x > kRgbFrame.width - margin || p.y > kRgbFrame.height - margin)
            continue;
        const Point2 q = apply(spec.true_transform, p);
        if (q.x < margin || q.y < margin || q.x > kThermalFrame.width - margin ||
            q.y > kThermalFrame.height - margin)
            continue;
        if (noise_px > 0.0) {
            set.pairs.push_back({{p.x + jitter(rng), p.y + jitter(rng)}, {q.x + jitter(rng), q.y + jitter(rng)}});
        } else {
            set.pairs.push_back({p, q});
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Random scene generation
// ---------------------------------------------------------------------------

struct SceneOptions {
    std::size_t n_faces = 1;
    double fever_fraction = 0.0;
    double mask_probability = 0.5;
    double thermal_noise_c = 0.0;
    double ambient_c = 22.0;
    double min_face_width = 120.0;
    double max_face_width = 220.0;
    AffineTransform true_transform = kFlirOneProTransform;
};

inline constexpr double kNormalTempLow = 36.2, kNormalTempHigh = 36.9;
inline constexpr double kFeverTempLow = 37.8, kFeverTempHigh = 39.5;

inline Landmarks5 canonical_landmarks(const BBox& b, double dx = 0.0, double dy = 0.0)
{
    auto at = [&](double fx, double fy) { return Point2{b.left + fx * b.width, b.top + fy * b.height}; };
    return {at(0.30 + dx, 0.38 + dy), at(0.70 + dx, 0.38 + dy), at(0.50 + dx, 0.56 + dy),
            at(0.35 + dx, 0.76 + dy), at(0.65 + dx, 0.76 + dy)};
}

// Faces are placed where their whole box maps inside the thermal frame, with a
// gap so boxes never overlap (pairwise IoU 0).
inline SceneSpec random_scene(std::uint64_t seed, const SceneOptions& opt)
{
    SceneSpec spec;
    spec.seed = seed;
    spec.true_transform = opt.true_transform;
    spec.thermal_noise_c = opt.thermal_noise_c;
    spec.ambient_c = opt.ambient_c;

    std::mt19937_64 rng(thermoscreen::detail::splitmix64(seed ^ 0x7363656e65ULL));
    std::uniform_real_distribution<double> uw(opt.min_face_width, opt.max_face_width);
    std::uniform_real_distribution<double> ux(0.0, kRgbFrame.width), uy(0.0, kRgbFrame.height);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> jit(-0.03, 0.03);
    constexpr double gap = 10.0;
    const BBox thermal_area{8, 8, kThermalFrame.width - 16.0, kThermalFrame.height - 16.0};

    for (std::size_t k = 0; k < opt.n_faces; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
            const double w = uw(rng);
            const BBox b{ux(rng), uy(rng), w, 1.2 * w};
            if (b.right() > kRgbFrame.width || b.bottom() > kRgbFrame.height) continue;
            bool inside = true;
            for (const Point2 c : {Point2{b.left, b.top}, Point2{b.right(), b.top}, Point2{b.left, b.bottom()},
                                   Point2{b.right(), b.bottom()}})
                inside = inside && thermal_area.contains(apply(opt.true_transform, c));
            if (!inside) continue;
            const BBox grown{b.left - gap, b.top - gap, b.width + 2 * gap, b.height + 2 * gap};
            if (std::ranges::any_of(spec.faces, [&](const FaceSpec& f) { return iou(f.bbox, grown) > 0.0; }))
                continue;
            FaceSpec f;
            f.bbox = b;
            f.landmarks = canonical_landmarks(b, jit(rng), jit(rng));
            const bool fever = unit(rng) < opt.fever_fraction;
            f.core_temp_c = fever ? std::uniform_real_distribution<double>(kFeverTempLow, kFeverTempHigh)(rng)
                                  : std::uniform_real_distribution<double>(kNormalTempLow, kNormalTempHigh)(rng);
            f.core_temp_c = std::round(f.core_temp_c * 100.0) / 100.0;
            f.mask_worn = unit(rng) < opt.mask_probability;
            spec.faces.push_back(f);
            placed = true;
        }
        if (!placed) throw InvalidSpec("could not place " + std::to_string(opt.n_faces) + " faces");
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Structured text (JSON) for scene specs and ground truth
// ---------------------------------------------------------------------------

using nlohmann::ordered_json;

inline ordered_json to_json(const Point2& p) { return ordered_json::array({p.x, p.y}); }
inline Point2 point_from_json(const ordered_json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline ordered_json to_json(const BBox& b)
{
    return ordered_json{{"left", b.left}, {"top", b.top}, {"width", b.width}, {"height", b.height}};
}
inline BBox bbox_from_json(const ordered_json& j)
{
    return {j.at("left").get<double>(), j.at("top").get<double>(), j.at("width").get<double>(),
            j.at("height").get<double>()};
}

inline ordered_json to_json(const Landmarks5& l)
{
    return ordered_json{{"left_eye", to_json(l.left_eye)},     {"right_eye", to_json(l.right_eye)},
                        {"nose", to_json(l.nose)},             {"mouth_left", to_json(l.mouth_left)},
                        {"mouth_right", to_json(l.mouth_right)}};
}
inline Landmarks5 landmarks_from_json(const ordered_json& j)
{
    return {point_from_json(j.at("left_eye")), point_from_json(j.at("right_eye")), point_from_json(j.at("nose")),
            point_from_json(j.at("mouth_left")), point_from_json(j.at("mouth_right"))};
}

inline ordered_json to_json(const AffineTransform& t) { return ordered_json(t.row_major()); }
inline AffineTransform transform_from_json(const ordered_json& j)
{
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 6) throw ParseError("transform needs 6 values");
    return {v[0], v[1], v[3], v[4], v[2], v[5]};
}

// Ground truth schema (version 1):
// { "format": "thermoscreen-truth", "version": 1, "seed": u64,
//   "true_transform": [a1,a2,tx,a3,a4,ty], "ambient_c": C, "thermal_noise_c": C,
//   "faces": [ { "bbox": {left,top,width,height}, "landmarks": {left_eye:[x,y],...},
//                "mask_worn": bool, "core_temp_c": C,
//                "forehead_rgb": [x,y] | null, "hotspot_thermal": [x,y] } ] }
inline ordered_json to_json(const GroundTruth& g)
{
    ordered_json faces = ordered_json::array();
    for (const auto& f : g.faces) {
        faces.push_back(ordered_json{{"bbox", to_json(f.bbox)},
                                     {"landmarks", to_json(f.landmarks)},
                                     {"mask_worn", f.mask_worn},
                                     {"core_temp_c", f.core_temp_c},
                                     {"forehead_rgb", f.forehead_rgb ? to_json(*f.forehead_rgb) : ordered_json()},
                                     {"hotspot_thermal", to_json(f.hotspot_thermal)}});
    }
    return ordered_json{{"format", "thermoscreen-truth"},
                        {"version", 1},
                        {"seed", g.seed},
                        {"true_transform", to_json(g.true_transform)},
                        {"ambient_c", g.ambient_c},
                        {"thermal_noise_c", g.thermal_noise_c},
                        {"faces", faces}};
}

inline GroundTruth truth_from_json(const ordered_json& j)
{
    try {
        if (j.at("format") != "thermoscreen-truth" || j.at("version") != 1)
            throw ParseError("not a version-1 truth file");
        GroundTruth g;
        g.seed = j.at("seed").get<std::uint64_t>();
        g.true_transform = transform_from_json(j.at("true_transform"));
        g.ambient_c = j.at("ambient_c").get<double>();
        g.thermal_noise_c = j.at("thermal_noise_c").get<double>();
        for (const auto& f : j.at("faces")) {
            FaceTruth t;
            t.bbox = bbox_from_json(f.at("bbox"));
            t.landmarks = landmarks_from_json(f.at("landmarks"));
            t.mask_worn = f.at("mask_worn").get<bool>();
            t.core_temp_c = f.at("core_temp_c").get<double>();
            if (!f.at("forehead_rgb").is_null()) t.forehead_rgb = point_from_json(f.at("forehead_rgb"));
            t.hotspot_thermal = point_from_json(f.at("hotspot_thermal"));
            g.faces.push_back(t);
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("truth: ") + e.what());
    }
}

inline GroundTruth read_truth_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return truth_from_json(ordered_json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline void write_truth_file(const std::string& path, const GroundTruth& g)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << to_json(g).dump(2) << '\n';
}

// Scene spec files hold either an explicit face list or generator options:
// { "seed": 7, "scenes": 3, "faces": 2, "fever_fraction": 0.1, ... } or
// { "seed": 7, "faces": [ {"bbox": {...}, "landmarks": {...}, "mask_worn": true,
//   "core_temp_c": 36.8} ], "thermal_noise_c": 0.1, "ambient_c": 22 }
struct SceneBatch {
    std::vector<SceneSpec> scenes;
};

inline SceneBatch scene_batch_from_json(const ordered_json& j)
{
    try {
        SceneBatch batch;
        const auto seed = j.value("seed", std::uint64_t{1});
        const auto count = j.value("scenes", std::size_t{1});
        const AffineTransform t = j.contains("true_transform") ? transform_from_json(j.at("true_transform"))
                                                               : kFlirOneProTransform;
        const auto& faces = j.at("faces");
        for (std::size_t i = 0; i < count; ++i) {
            SceneSpec spec;
            if (faces.is_number_unsigned() || faces.is_number_integer()) {
                SceneOptions opt;
                opt.n_faces = faces.get<std::size_t>();
                opt.fever_fraction = j.value("fever_fraction", 0.0);
                opt.mask_probability = j.value("mask_probability", 0.5);
                opt.thermal_noise_c = j.value("thermal_noise_c", 0.0);
                opt.ambient_c = j.value("ambient_c", 22.0);
                opt.true_transform = t;
                spec = random_scene(seed + i, opt);
            } else {
                spec.seed = seed + i;
                spec.true_transform = t;
                spec.thermal_noise_c = j.value("thermal_noise_c", 0.0);
                spec.ambient_c = j.value("ambient_c", 22.0);
                for (const auto& f : faces) {
                    FaceSpec fs;
                    fs.bbox = bbox_from_json(f.at("bbox"));
                    fs.landmarks = f.contains("landmarks") ? landmarks_from_json(f.at("landmarks"))
                                                           : canonical_landmarks(fs.bbox);
                    fs.mask_worn = f.value("mask_worn", false);
                    fs.core_temp_c = f.value("core_temp_c", 36.8);
                    spec.faces.push_back(fs);
                }
            }
            spec.annotation_noise_px = j.value("annotation_noise_px", 0.0);
            spec.device_id = j.value("device_id", std::string("sim"));
            spec.timestamp_ms = j.value("timestamp_ms", std::uint64_t{0}) + i * 1000;
            spec.validate();
            batch.scenes.push_back(std::move(spec));
        }
        return batch;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpec(std::string("scene spec: ") + e.what());
    }
}

}  // namespace thermoscreen::sim
