#pragma once

// Detection plumbing around pluggable scorers: prior-box (anchor) tiling,
// IoU, greedy NMS, box regression decoding, and the coarse-to-fine cascade
// (proposal -> refine -> output/landmarks -> mask). Scorers are black boxes
// behind a small contract so a real network can replace the mock.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thermoscreen/error.hpp"
#include "thermoscreen/geometry.hpp"
#include "thermoscreen/image.hpp"

namespace thermoscreen {

struct Landmarks5 {
    Point2 left_eye;
    Point2 right_eye;
    Point2 nose;
    Point2 mouth_left;
    Point2 mouth_right;

    std::array<Point2, 5> points() const { return {left_eye, right_eye, nose, mouth_left, mouth_right}; }

    static Landmarks5 from_points(const std::array<Point2, 5>& p)
    {
        return {p[0], p[1], p[2], p[3], p[4]};
    }

    bool finite() const
    {
        return std::ranges::all_of(points(), [](const Point2& p) { return is_finite(p); });
    }

    bool eyes_above_mouth() const
    {
        return std::max(left_eye.y, right_eye.y) < std::min(mouth_left.y, mouth_right.y);
    }

    friend bool operator==(const Landmarks5&, const Landmarks5&) = default;
};

struct FaceDetection {
    BBox bbox;
    Landmarks5 landmarks;
    double face_score = 0.0;
    double mask_score = 0.0;
};

// ---------------------------------------------------------------------------
// Anchors
// ---------------------------------------------------------------------------

struct AnchorLayer {
    int feature_map_size = 0;
    std::vector<double> sizes;   // fraction of the input side
    std::vector<double> ratios;  // width / height
};

struct AnchorConfig {
    std::vector<AnchorLayer> layers;

    // Mask-branch multibox layers: 33/17/9/5/3 cells, 2 sizes x 3 ratios each.
    static AnchorConfig mask_branch_default()
    {
        const std::vector<double> ratios{1.0, 0.62, 0.42};
        return {{{33, {0.04, 0.056}, ratios},
                 {17, {0.08, 0.11}, ratios},
                 {9, {0.16, 0.22}, ratios},
                 {5, {0.32, 0.45}, ratios},
                 {3, {0.64, 0.72}, ratios}}};
    }

    std::size_t anchor_count() const
    {
        std::size_t n = 0;
        for (const auto& l : layers)
            n += static_cast<std::size_t>(l.feature_map_size) * static_cast<std::size_t>(l.feature_map_size) *
                 l.sizes.size() * l.ratios.size();
        return n;
    }

    void validate() const
    {
        if (layers.empty()) throw InvalidConfig("anchor config has no layers");
        for (const auto& l : layers) {
            if (l.feature_map_size <= 0) throw InvalidConfig("feature map size must be positive");
            if (l.sizes.empty() || l.ratios.empty()) throw InvalidConfig("empty sizes or ratios");
            auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
            if (!std::ranges::all_of(l.sizes, positive) || !std::ranges::all_of(l.ratios, positive))
                throw InvalidConfig("anchor sizes and ratios must be positive");
        }
    }
};

// Normalized [0,1] boxes; ordering is layer, row, column, size, ratio.
// w = s*sqrt(r), h = s/sqrt(r), so every anchor keeps area s^2.
inline std::vector<BBox> generate_anchors(const AnchorConfig& cfg)
{
    cfg.validate();
    std::vector<BBox> out;
    out.reserve(cfg.anchor_count());
    for (const auto& layer : cfg.layers) {
        const double n = layer.feature_map_size;
        for (int i = 0; i < layer.feature_map_size; ++i) {
            const double cy = (i + 0.5) / n;
            for (int j = 0; j < layer.feature_map_size; ++j) {
                const double cx = (j + 0.5) / n;
                for (double s : layer.sizes) {
                    for (double r : layer.ratios) {
                        const double w = s * std::sqrt(r);
                        const double h = s / std::sqrt(r);
                        out.push_back({cx - w / 2.0, cy - h / 2.0, w, h});
                    }
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// IoU / NMS
// ---------------------------------------------------------------------------

inline double iou(const BBox& a, const BBox& b)
{
    if (a == b) return a.area() > 0.0 ? 1.0 : 0.0;
    const double iw = std::min(a.right(), b.right()) - std::max(a.left, b.left);
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

struct ScoredBox {
    BBox box;
    double score = 0.0;

    friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

// Descending score, then smaller left, then smaller top.
inline bool nms_before(const ScoredBox& a, const ScoredBox& b)
{
    if (a.score != b.score) return a.score > b.score;
    if (a.box.left != b.box.left) return a.box.left < b.box.left;
    return a.box.top < b.box.top;
}

// Greedy suppression; returns the kept indices into `dets`, in output order.
inline std::vector<std::size_t> nms_indices(std::span<const ScoredBox> dets, double iou_threshold)
{
    std::vector<std::size_t> order(dets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return nms_before(dets[a], dets[b]); });
    std::vector<bool> suppressed(dets.size(), false);
    std::vector<std::size_t> keep;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t i = order[oi];
        if (suppressed[i]) continue;
        keep.push_back(i);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const std::size_t j = order[oj];
            if (!suppressed[j] && iou(dets[i].box, dets[j].box) > iou_threshold) suppressed[j] = true;
        }
    }
    return keep;
}

inline std::vector<ScoredBox> nms(std::span<const ScoredBox> dets, double iou_threshold)
{
    std::vector<ScoredBox> out;
    for (auto i : nms_indices(dets, iou_threshold)) out.push_back(dets[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Box regression
// ---------------------------------------------------------------------------

using BoxRegression = std::array<double, 4>;

inline constexpr double kMaxLogScale = 10.0;

inline BBox decode_bbox(const BBox& anchor, const BoxRegression& r)
{
    if (!anchor.valid()) throw InvalidConfig("invalid anchor box");
    for (double v : r)
        if (!std::isfinite(v)) throw Overflow("non-finite regression");
    if (r[2] > kMaxLogScale || r[3] > kMaxLogScale) throw Overflow("regression scale exponent > 10");
    return {anchor.left + r[0] * anchor.width, anchor.top + r[1] * anchor.height,
            anchor.width * std::exp(r[2]), anchor.height * std::exp(r[3])};
}

// Inverse of decode_bbox: the offsets that take `anchor` onto `target`.
inline BoxRegression encode_bbox(const BBox& anchor, const BBox& target)
{
    return {(target.left - anchor.left) / anchor.width, (target.top - anchor.top) / anchor.height,
            std::log(target.width / anchor.width), std::log(target.height / anchor.height)};
}

// Smallest square with the same center and the longer side of `b`.
inline BBox square_box(const BBox& b)
{
    const double side = std::max(b.width, b.height);
    const Point2 c = b.center();
    return {c.x - side / 2.0, c.y - side / 2.0, side, side};
}

// ---------------------------------------------------------------------------
// Scorer contract
// ---------------------------------------------------------------------------

enum class Stage { Proposal, Refine, Output, Mask };

inline const char* stage_name(Stage s)
{
    switch (s) {
        case Stage::Proposal: return "p_stage";
        case Stage::Refine: return "r_stage";
        case Stage::Output: return "o_stage";
        case Stage::Mask: return "mask_stage";
    }
    return "?";
}

// Window sizes follow the 12/24/48 cascade inputs; the mask branch reuses 48.
inline int stage_input_size(Stage s)
{
    switch (s) {
        case Stage::Proposal: return 12;
        case Stage::Refine: return 24;
        case Stage::Output: return 48;
        case Stage::Mask: return 48;
    }
    return 0;
}

struct StageInput {
    const RgbImage* image = nullptr;
    BBox window;  // full-image pixels
    int input_size = 0;

    RgbImage patch() const { return crop_resize(*image, window, input_size); }
};

// cls: 2 units [negative, positive]; box: 4 regression units relative to the
// window (see decode_bbox); landmarks: 10 units, (x, y) pairs normalized to the
// window, required from the output stage only.
struct StageOutput {
    std::vector<double> cls;
    std::vector<double> box;
    std::vector<double> landmarks;

    double positive() const { return cls.at(1); }
};

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual Stage stage() const = 0;
    virtual StageOutput score(const StageInput& in) const = 0;
};

struct CascadeScorers {
    const Scorer* proposal = nullptr;
    const Scorer* refine = nullptr;
    const Scorer* output = nullptr;
    const Scorer* mask = nullptr;
};

struct CascadeConfig {
    double min_face_px = 20.0;
    double scale_factor = 0.709;
    int proposal_stride = 2;
    std::array<double, 3> score_thresholds{0.6, 0.7, 0.7};
    std::array<double, 3> nms_thresholds{0.7, 0.7, 0.7};

    void validate() const
    {
        if (!(min_face_px >= 12.0)) throw InvalidConfig("min_face_px must be >= 12");
        if (!(scale_factor > 0.0 && scale_factor < 1.0)) throw InvalidConfig("scale_factor in (0,1)");
        if (proposal_stride < 1) throw InvalidConfig("proposal_stride >= 1");
        for (double t : score_thresholds)
            if (!(t >= 0.0 && t <= 1.0)) throw InvalidConfig("score threshold in [0,1]");
        for (double t : nms_thresholds)
            if (!(t >= 0.0 && t <= 1.0)) throw InvalidConfig("nms threshold in [0,1]");
    }
};

namespace detail {

inline StageOutput call_scorer(const Scorer* scorer, Stage expected, const StageInput& in)
{
    const char* name = stage_name(expected);
    if (scorer == nullptr) throw ScorerFailure(name, "scorer missing");
    if (scorer->stage() != expected) throw ScorerFailure(name, "scorer registered for another stage");
    StageOutput out;
    try {
        out = scorer->score(in);
    } catch (const ScorerFailure&) {
        throw;
    } catch (const std::exception& e) {
        throw ScorerFailure(name, e.what());
    }
    auto finite = [](const std::vector<double>& v) {
        return std::ranges::all_of(v, [](double x) { return std::isfinite(x); });
    };
    if (out.cls.size() != 2 || !finite(out.cls)) throw ScorerFailure(name, "expected 2 class units");
    if (out.cls[1] < 0.0 || out.cls[1] > 1.0) throw ScorerFailure(name, "probability outside [0,1]");
    if (expected != Stage::Mask && (out.box.size() != 4 || !finite(out.box)))
        throw ScorerFailure(name, "expected 4 box units");
    if (expected == Stage::Output && (out.landmarks.size() != 10 || !finite(out.landmarks)))
        throw ScorerFailure(name, "expected 10 landmark units");
    return out;
}

struct Candidate {
    ScoredBox scored;
    Landmarks5 landmarks;
};

inline std::vector<Candidate> suppress(const std::vector<Candidate>& cands, double threshold)
{
    std::vector<ScoredBox> boxes;
    boxes.reserve(cands.size());
    for (const auto& c : cands) boxes.push_back(c.scored);
    std::vector<Candidate> out;
    for (auto i : nms_indices(boxes, threshold)) out.push_back(cands[i]);
    return out;
}

inline std::optional<BBox> decode_checked(const BBox& window, const std::vector<double>& r,
                                          const char* stage)
{
    try {
        BBox b = decode_bbox(window, {r[0], r[1], r[2], r[3]});
        if (!b.valid()) return std::nullopt;
        return b;
    } catch (const Overflow& e) {
        throw ScorerFailure(stage, e.what());
    }
}

}  // namespace detail

// Image pyramid -> proposal windows -> NMS -> refine -> NMS -> output with
// landmarks -> NMS -> mask score per survivor. Each stage consumes the
// previous stage's boxes. Landmarks are reported in full-image pixels.
inline std::vector<FaceDetection> run_cascade(const RgbImage& image, const CascadeScorers& scorers,
                                              const CascadeConfig& cfg = {})
{
    cfg.validate();
    if (image.width() < cfg.min_face_px || image.height() < cfg.min_face_px)
        throw InvalidConfig("image smaller than min_face_px");

    using detail::Candidate;
    const int p_size = stage_input_size(Stage::Proposal);

    std::vector<Candidate> cands;
    for (double scale = p_size / cfg.min_face_px;; scale *= cfg.scale_factor) {
        const int sw = static_cast<int>(std::floor(image.width() * scale));
        const int sh = static_cast<int>(std::floor(image.height() * scale));
        if (std::min(sw, sh) < p_size) break;
        const double win = p_size / scale;
        std::vector<Candidate> level;
        for (int y = 0; y + p_size <= sh; y += cfg.proposal_stride) {
            for (int x = 0; x + p_size <= sw; x += cfg.proposal_stride) {
                StageInput in{&image, {x / scale, y / scale, win, win}, p_size};
                const auto out = detail::call_scorer(scorers.proposal, Stage::Proposal, in);
                if (out.positive() < cfg.score_thresholds[0]) continue;
                if (auto b = detail::decode_checked(in.window, out.box, stage_name(Stage::Proposal)))
                    level.push_back({{*b, out.positive()}, {}});
            }
        }
        level = detail::suppress(level, cfg.nms_thresholds[0]);
        cands.insert(cands.end(), level.begin(), level.end());
    }
    cands = detail::suppress(cands, cfg.nms_thresholds[0]);

    auto refine_stage = [&](Stage stage, double threshold, double nms_threshold) {
        std::vector<Candidate> next;
        for (const auto& c : cands) {
            StageInput in{&image, square_box(c.scored.box), stage_input_size(stage)};
            const auto out = detail::call_scorer(stage == Stage::Refine ? scorers.refine : scorers.output,
                                                 stage, in);
            if (out.positive() < threshold) continue;
            auto b = detail::decode_checked(in.window, out.box, stage_name(stage));
            if (!b) continue;
            Candidate n{{*b, out.positive()}, {}};
            if (stage == Stage::Output) {
                std::array<Point2, 5> pts;
                for (std::size_t k = 0; k < 5; ++k) {
                    pts[k] = {in.window.left + out.landmarks[2 * k] * in.window.width,
                              in.window.top + out.landmarks[2 * k + 1] * in.window.height};
                }
                n.landmarks = Landmarks5::from_points(pts);
                if (!n.landmarks.eyes_above_mouth()) continue;
            }
            next.push_back(n);
        }
        cands = detail::suppress(next, nms_threshold);
    };
    refine_stage(Stage::Refine, cfg.score_thresholds[1], cfg.nms_thresholds[1]);
    refine_stage(Stage::Output, cfg.score_thresholds[2], cfg.nms_thresholds[2]);

    std::vector<FaceDetection> dets;
    dets.reserve(cands.size());
    for (const auto& c : cands) {
        StageInput in{&image, c.scored.box, stage_input_size(Stage::Mask)};
        const auto out = detail::call_scorer(scorers.mask, Stage::Mask, in);
        dets.push_back({c.scored.box, c.landmarks, c.scored.score, out.positive()});
    }
    return dets;
}

// ---------------------------------------------------------------------------
// Ground-truth-backed mock scorer
// ---------------------------------------------------------------------------

struct TruthFace {
    BBox bbox;
    Landmarks5 landmarks;
    bool mask_worn = false;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Standard normal draw keyed on the inputs, independent of evaluation order.
inline double keyed_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
    std::uint64_t h = splitmix64(seed ^ splitmix64(a ^ splitmix64(b ^ splitmix64(c))));
    const double u1 = (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
    h = splitmix64(h);
    const double u2 = (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace detail

// Scores windows by overlap with known faces: face probability ramps from 0 at
// IoU 0.25 to 1 at IoU 0.65, regression targets the best-overlapping truth box,
// landmarks are the truth landmarks in window coordinates, and the mask unit is
// the truth mask flag. Gaussian noise (sigma) is added to probabilities.
class MockScorer final : public Scorer {
public:
    MockScorer(Stage stage, std::vector<TruthFace> faces, double noise_sigma = 0.0,
               std::uint64_t seed = 0)
        : stage_(stage), faces_(std::move(faces)), sigma_(noise_sigma), seed_(seed)
    {}

    Stage stage() const override { return stage_; }

    StageOutput score(const StageInput& in) const override
    {
        const TruthFace* best = nullptr;
        double best_iou = 0.0;
        for (const auto& f : faces_) {
            const double v = iou(in.window, f.bbox);
            if (v > best_iou) {
                best_iou = v;
                best = &f;
            }
        }
        double p = 0.0;
        if (stage_ == Stage::Mask) {
            p = (best != nullptr && best->mask_worn) ? 1.0 : 0.0;
        } else {
            p = std::clamp((best_iou - 0.25) / 0.4, 0.0, 1.0);
        }
        if (sigma_ > 0.0) {
            const auto key = [](double v) { return std::bit_cast<std::uint64_t>(v); };
            p += sigma_ * detail::keyed_normal(seed_ + static_cast<std::uint64_t>(stage_),
                                               key(in.window.left), key(in.window.top),
                                               key(in.window.width));
            p = std::clamp(p, 0.0, 1.0);
        }
        StageOutput out;
        out.cls = {1.0 - p, p};
        if (stage_ == Stage::Mask) return out;
        out.box = {0.0, 0.0, 0.0, 0.0};
        if (best != nullptr) {
            const auto r = encode_bbox(in.window, best->bbox);
            out.box.assign(r.begin(), r.end());
        }
        if (stage_ == Stage::Output) {
            out.landmarks.assign(10, 0.5);
            if (best != nullptr) {
                const auto pts = best->landmarks.points();
                for (std::size_t k = 0; k < 5; ++k) {
                    out.landmarks[2 * k] = (pts[k].x - in.window.left) / in.window.width;
                    out.landmarks[2 * k + 1] = (pts[k].y - in.window.top) / in.window.height;
                }
            }
        }
        return out;
    }

private:
    Stage stage_;
    std::vector<TruthFace> faces_;
    double sigma_;
    std::uint64_t seed_;
};

// Owns one mock scorer per stage over the same truth.
struct MockDetector {
    MockScorer proposal;
    MockScorer refine;
    MockScorer output;
    MockScorer mask;

    explicit MockDetector(const std::vector<TruthFace>& faces, double sigma = 0.0, std::uint64_t seed = 0)
        : proposal(Stage::Proposal, faces, sigma, seed),
          refine(Stage::Refine, faces, sigma, seed),
          output(Stage::Output, faces, sigma, seed),
          mask(Stage::Mask, faces, sigma, seed)
    {}

    CascadeScorers scorers() const { return {&proposal, &refine, &output, &mask}; }
};

}  // namespace thermoscreen
