#pragma once

// Planar registration between the RGB and thermal coordinate frames:
// the 6-parameter affine map, its RANSAC estimation from hand-marked
// point matches, the per-axis / Euclidean alignment losses, and the
// forehead measurement point built from the face box and the two eyes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "thermoscreen/error.hpp"

namespace thermoscreen {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

inline bool is_finite(const Point2& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

struct FrameSize {
    int width = 0;
    int height = 0;

    friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

inline constexpr FrameSize kRgbFrame{1440, 1080};
inline constexpr FrameSize kThermalFrame{640, 480};

// Axis-aligned box in pixels. Valid boxes have positive extent.
struct BBox {
    double left = 0.0;
    double top = 0.0;
    double width = 0.0;
    double height = 0.0;

    double right() const { return left + width; }
    double bottom() const { return top + height; }
    double area() const { return width * height; }
    Point2 center() const { return {left + width / 2.0, top + height / 2.0}; }

    bool valid() const
    {
        return std::isfinite(left) && std::isfinite(top) && std::isfinite(width) &&
               std::isfinite(height) && width > 0.0 && height > 0.0;
    }

    // Closed-interval containment.
    bool contains(const Point2& p) const
    {
        return p.x >= left && p.x <= right() && p.y >= top && p.y <= bottom();
    }

    bool strictly_contains(const Point2& p) const
    {
        return p.x > left && p.x < right() && p.y > top && p.y < bottom();
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

// Intersection of `box` with [0,w]x[0,h]; empty when nothing remains.
inline std::optional<BBox> clip(const BBox& box, FrameSize frame)
{
    const double l = std::max(box.left, 0.0);
    const double t = std::max(box.top, 0.0);
    const double r = std::min(box.right(), static_cast<double>(frame.width));
    const double b = std::min(box.bottom(), static_cast<double>(frame.height));
    if (!(r > l) || !(b > t)) return std::nullopt;
    return BBox{l, t, r - l, b - t};
}

// x' = a1*x + a2*y + tx
// y' = a3*x + a4*y + ty
struct AffineTransform {
    double a1 = 1.0;
    double a2 = 0.0;
    double a3 = 0.0;
    double a4 = 1.0;
    double tx = 0.0;
    double ty = 0.0;

    static AffineTransform identity() { return {}; }

    double det() const { return a1 * a4 - a2 * a3; }

    bool finite() const
    {
        return std::isfinite(a1) && std::isfinite(a2) && std::isfinite(a3) &&
               std::isfinite(a4) && std::isfinite(tx) && std::isfinite(ty);
    }

    // Row-major [a1 a2 tx a3 a4 ty].
    std::array<double, 6> row_major() const { return {a1, a2, tx, a3, a4, ty}; }

    friend bool operator==(const AffineTransform&, const AffineTransform&) = default;
};

// The FLIR ONE Pro RGB->thermal calibration published with the screening system.
inline constexpr AffineTransform kFlirOneProTransform{0.5584, -0.0062, -0.0014, 0.5770, -65.9722,
                                                      -156.8899};

inline Point2 apply(const AffineTransform& t, const Point2& p)
{
    return {t.a1 * p.x + t.a2 * p.y + t.tx, t.a3 * p.x + t.a4 * p.y + t.ty};
}

inline AffineTransform invert(const AffineTransform& t)
{
    const double d = t.det();
    if (!(std::abs(d) > 1e-12)) {
        throw SingularTransform("determinant " + std::to_string(d));
    }
    AffineTransform inv;
    inv.a1 = t.a4 / d;
    inv.a2 = -t.a2 / d;
    inv.a3 = -t.a3 / d;
    inv.a4 = t.a1 / d;
    inv.tx = -(inv.a1 * t.tx + inv.a2 * t.ty);
    inv.ty = -(inv.a3 * t.tx + inv.a4 * t.ty);
    return inv;
}

// Composition: (lhs * rhs)(p) = lhs(rhs(p)).
inline AffineTransform compose(const AffineTransform& lhs, const AffineTransform& rhs)
{
    AffineTransform r;
    r.a1 = lhs.a1 * rhs.a1 + lhs.a2 * rhs.a3;
    r.a2 = lhs.a1 * rhs.a2 + lhs.a2 * rhs.a4;
    r.a3 = lhs.a3 * rhs.a1 + lhs.a4 * rhs.a3;
    r.a4 = lhs.a3 * rhs.a2 + lhs.a4 * rhs.a4;
    r.tx = lhs.a1 * rhs.tx + lhs.a2 * rhs.ty + lhs.tx;
    r.ty = lhs.a3 * rhs.tx + lhs.a4 * rhs.ty + lhs.ty;
    return r;
}

// ---------------------------------------------------------------------------
// Point matches and RANSAC estimation
// ---------------------------------------------------------------------------

struct PointMatch {
    Point2 rgb;
    Point2 thermal;
};

struct PointMatchSet {
    std::vector<PointMatch> pairs;
    FrameSize rgb_size = kRgbFrame;
    FrameSize thermal_size = kThermalFrame;
};

struct RansacConfig {
    int max_iterations = 2000;
    double confidence = 0.99;
    double inlier_threshold_px = 3.0;
    // Unset means max(3, ceil(50% of pairs)).
    std::optional<std::size_t> min_inliers;
    std::uint64_t seed = 0x5eed;

    std::size_t min_inliers_for(std::size_t n) const
    {
        if (min_inliers) return std::max<std::size_t>(3, *min_inliers);
        return std::max<std::size_t>(3, (n + 1) / 2);
    }
};

struct RansacResult {
    AffineTransform transform;
    std::vector<bool> inlier_mask;
    std::size_t inlier_count = 0;
    int iterations = 0;
};

inline double reprojection_error(const AffineTransform& t, const PointMatch& m)
{
    const Point2 p = apply(t, m.rgb);
    return std::hypot(p.x - m.thermal.x, p.y - m.thermal.y);
}

namespace detail {

// Centered 2x2 scatter of the source points; a vanishing determinant relative
// to the squared trace means the points are (numerically) collinear.
inline bool collinear(std::span<const PointMatch> pts, std::span<const std::size_t> idx)
{
    if (idx.size() < 3) return true;
    double mx = 0, my = 0;
    for (auto i : idx) {
        mx += pts[i].rgb.x;
        my += pts[i].rgb.y;
    }
    mx /= static_cast<double>(idx.size());
    my /= static_cast<double>(idx.size());
    double sxx = 0, sxy = 0, syy = 0;
    for (auto i : idx) {
        const double dx = pts[i].rgb.x - mx;
        const double dy = pts[i].rgb.y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    const double tr = sxx + syy;
    if (!(tr > 0.0)) return true;
    return (sxx * syy - sxy * sxy) <= 1e-10 * tr * tr;
}

// Least-squares affine fit over the selected pairs. Coordinates are centered so
// the normal equations decouple into one 2x2 system per output row plus the
// translation; three non-collinear pairs give the exact solution.
inline std::optional<AffineTransform> fit_least_squares(std::span<const PointMatch> pts,
                                                        std::span<const std::size_t> idx)
{
    if (collinear(pts, idx)) return std::nullopt;
    const double n = static_cast<double>(idx.size());
    double sx = 0, sy = 0, ux = 0, uy = 0;
    for (auto i : idx) {
        sx += pts[i].rgb.x;
        sy += pts[i].rgb.y;
        ux += pts[i].thermal.x;
        uy += pts[i].thermal.y;
    }
    sx /= n;
    sy /= n;
    ux /= n;
    uy /= n;

    double sxx = 0, sxy = 0, syy = 0;
    double bx_x = 0, bx_y = 0, by_x = 0, by_y = 0;
    for (auto i : idx) {
        const double dx = pts[i].rgb.x - sx;
        const double dy = pts[i].rgb.y - sy;
        const double du = pts[i].thermal.x - ux;
        const double dv = pts[i].thermal.y - uy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        bx_x += dx * du;
        bx_y += dy * du;
        by_x += dx * dv;
        by_y += dy * dv;
    }
    const double d = sxx * syy - sxy * sxy;
    if (!(std::abs(d) > 0.0)) return std::nullopt;

    AffineTransform t;
    t.a1 = (bx_x * syy - bx_y * sxy) / d;
    t.a2 = (bx_y * sxx - bx_x * sxy) / d;
    t.a3 = (by_x * syy - by_y * sxy) / d;
    t.a4 = (by_y * sxx - by_x * sxy) / d;
    t.tx = ux - t.a1 * sx - t.a2 * sy;
    t.ty = uy - t.a3 * sx - t.a4 * sy;
    if (!t.finite()) return std::nullopt;
    return t;
}

inline std::size_t classify(std::span<const PointMatch> pts, const AffineTransform& t,
                            double threshold, std::vector<bool>& mask, double& sse)
{
    mask.assign(pts.size(), false);
    sse = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double e = reprojection_error(t, pts[i]);
        if (e <= threshold) {
            mask[i] = true;
            sse += e * e;
            ++count;
        }
    }
    return count;
}

inline std::vector<std::size_t> mask_indices(const std::vector<bool>& mask)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) idx.push_back(i);
    return idx;
}

}  // namespace detail

// Two-stage robust fit: hypothesize from random minimal (3-pair) samples and
// keep the largest consensus set, then refit by least squares on the inliers.
// The refit/reclassify step repeats until the inlier set is stable.
inline RansacResult estimate_affine_ransac(const PointMatchSet& matches,
                                           const RansacConfig& cfg = {})
{
    const auto& pts = matches.pairs;
    const std::size_t n = pts.size();
    if (n < 3) throw DegenerateInput("need at least 3 point matches, got " + std::to_string(n));
    if (!(cfg.inlier_threshold_px > 0.0) || cfg.max_iterations < 1 ||
        !(cfg.confidence > 0.0 && cfg.confidence < 1.0)) {
        throw InvalidConfig("ransac: bad threshold/iterations/confidence");
    }
    for (const auto& m : pts) {
        if (!is_finite(m.rgb) || !is_finite(m.thermal))
            throw DegenerateInput("non-finite point match");
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    if (detail::collinear(pts, all)) throw DegenerateInput("all rgb points are collinear");

    const std::size_t need = cfg.min_inliers_for(n);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);

    RansacResult best;
    double best_sse = std::numeric_limits<double>::infinity();
    std::vector<bool> mask;
    long long budget = cfg.max_iterations;
    int it = 0;
    for (; it < budget; ++it) {
        std::array<std::size_t, 3> s{};
        s[0] = pick(rng);
        do s[1] = pick(rng); while (s[1] == s[0]);
        do s[2] = pick(rng); while (s[2] == s[0] || s[2] == s[1]);

        const auto model = detail::fit_least_squares(pts, s);
        if (!model) continue;
        double sse = 0.0;
        const std::size_t count = detail::classify(pts, *model, cfg.inlier_threshold_px, mask, sse);
        if (count > best.inlier_count || (count == best.inlier_count && sse < best_sse)) {
            best.transform = *model;
            best.inlier_mask = mask;
            best.inlier_count = count;
            best_sse = sse;

            const double w = static_cast<double>(count) / static_cast<double>(n);
            const double p_all = w * w * w;
            if (p_all >= 1.0) {
                budget = it + 1;
            } else if (p_all > 0.0) {
                const double k = std::log(1.0 - cfg.confidence) / std::log(1.0 - p_all);
                budget = std::min<long long>(budget, static_cast<long long>(std::ceil(k)));
            }
        }
    }
    best.iterations = it;

    if (best.inlier_count < need) {
        throw NoConsensus("best consensus " + std::to_string(best.inlier_count) + " < " +
                          std::to_string(need));
    }

    for (int round = 0; round < 10; ++round) {
        const auto idx = detail::mask_indices(best.inlier_mask);
        const auto refit = detail::fit_least_squares(pts, idx);
        if (!refit) break;
        double sse = 0.0;
        const std::size_t count = detail::classify(pts, *refit, cfg.inlier_threshold_px, mask, sse);
        if (count < need) break;
        const bool stable = mask == best.inlier_mask;
        best.transform = *refit;
        best.inlier_mask = mask;
        best.inlier_count = count;
        if (stable) break;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Alignment loss
// ---------------------------------------------------------------------------

// Mean absolute error per axis normalized by the thermal width/height, and mean
// Euclidean error normalized by the thermal diagonal. Fractions (x1000 for permil).
struct AlignmentLoss {
    double lx = 0.0;
    double ly = 0.0;
    double leuc = 0.0;
};

inline AlignmentLoss alignment_loss(std::span<const Point2> predicted, std::span<const Point2> marked,
                                    FrameSize thermal_size = kThermalFrame)
{
    if (predicted.size() != marked.size()) {
        throw LengthMismatch(std::to_string(predicted.size()) + " predicted vs " +
                             std::to_string(marked.size()) + " marked");
    }
    if (predicted.empty()) throw EmptyInput("alignment_loss needs at least one point");
    if (thermal_size.width <= 0 || thermal_size.height <= 0)
        throw InvalidConfig("thermal size must be positive");

    const double w = thermal_size.width;
    const double h = thermal_size.height;
    const double diag = std::hypot(w, h);
    const double n = static_cast<double>(predicted.size());
    double sx = 0, sy = 0, se = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double dx = marked[i].x - predicted[i].x;
        const double dy = marked[i].y - predicted[i].y;
        sx += std::abs(dx);
        sy += std::abs(dy);
        se += std::sqrt(dx * dx + dy * dy);
    }
    return {sx / (w * n), sy / (h * n), se / (diag * n)};
}

// ---------------------------------------------------------------------------
// Forehead measurement point
// ---------------------------------------------------------------------------

// Intersection of the line through the box's top-left corner and the right eye
// with the line through the top-right corner and the left eye.
inline Point2 forehead_center(const BBox& bbox, const Point2& left_eye, const Point2& right_eye)
{
    if (!bbox.valid()) throw DegenerateGeometry("invalid face box");
    if (!bbox.contains(left_eye) || !bbox.contains(right_eye))
        throw DegenerateGeometry("eye outside face box");

    const Point2 tl{bbox.left, bbox.top};
    const Point2 tr{bbox.right(), bbox.top};
    const Point2 d1{right_eye.x - tl.x, right_eye.y - tl.y};
    const Point2 d2{left_eye.x - tr.x, left_eye.y - tr.y};
    const double cross = d1.x * d2.y - d1.y * d2.x;
    const double scale = std::hypot(d1.x, d1.y) * std::hypot(d2.x, d2.y);
    if (!(std::abs(cross) > 1e-9 * scale)) {
        throw DegenerateGeometry("corner-to-eye lines are parallel");
    }
    const Point2 w{tr.x - tl.x, tr.y - tl.y};
    const double s = (w.x * d2.y - w.y * d2.x) / cross;
    return {tl.x + s * d1.x, tl.y + s * d1.y};
}

struct ForeheadRoiConfig {
    double roi_fraction = 0.2;

    void validate() const
    {
        if (!(roi_fraction > 0.0 && roi_fraction <= 1.0))
            throw InvalidConfig("roi_fraction must be in (0, 1]");
    }
};

// Square of side roi_fraction * bbox.width centered on `center`, clipped to the frame.
inline BBox forehead_roi(const Point2& center, const BBox& bbox, const ForeheadRoiConfig& cfg,
                         FrameSize frame)
{
    cfg.validate();
    if (!bbox.contains(center)) throw DegenerateGeometry("forehead center outside face box");
    const double side = cfg.roi_fraction * bbox.width;
    const BBox roi{center.x - side / 2.0, center.y - side / 2.0, side, side};
    auto clipped = clip(roi, frame);
    if (!clipped) throw OutOfFrame("forehead roi outside frame");
    return *clipped;
}

// ---------------------------------------------------------------------------
// Text formats
// ---------------------------------------------------------------------------

// Annotation lines: `rgb_x rgb_y thermal_x thermal_y`; `#` starts a comment.
inline std::vector<PointMatch> parse_point_matches(std::istream& in)
{
    std::vector<PointMatch> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::array<double, 4> v{};
        std::size_t got = 0;
        double tmp;
        while (ls >> tmp) {
            if (got == 4) throw ParseError("line " + std::to_string(lineno) + ": too many values");
            v[got++] = tmp;
        }
        if (!ls.eof()) throw ParseError("line " + std::to_string(lineno) + ": not a number");
        if (got == 0) continue;
        if (got != 4) throw ParseError("line " + std::to_string(lineno) + ": expected 4 values");
        PointMatch m{{v[0], v[1]}, {v[2], v[3]}};
        if (!is_finite(m.rgb) || !is_finite(m.thermal))
            throw ParseError("line " + std::to_string(lineno) + ": non-finite value");
        out.push_back(m);
    }
    return out;
}

inline void write_point_matches(std::ostream& out, std::span<const PointMatch> pairs)
{
    out << "# rgb_x rgb_y thermal_x thermal_y\n" << std::setprecision(10);
    for (const auto& m : pairs)
        out << m.rgb.x << ' ' << m.rgb.y << ' ' << m.thermal.x << ' ' << m.thermal.y << '\n';
}

// `AFF1` header line, then the two matrix rows.
inline std::string format_transform(const AffineTransform& t)
{
    std::ostringstream os;
    os << "AFF1\n" << std::setprecision(17);
    os << t.a1 << ' ' << t.a2 << ' ' << t.tx << '\n';
    os << t.a3 << ' ' << t.a4 << ' ' << t.ty << '\n';
    return os.str();
}

inline AffineTransform parse_transform(std::istream& in)
{
    std::string magic;
    if (!(in >> magic) || magic != "AFF1") throw ParseError("transform: missing AFF1 header");
    std::array<double, 6> v{};
    for (auto& x : v)
        if (!(in >> x)) throw ParseError("transform: expected 6 values");
    std::string extra;
    if (in >> extra) throw ParseError("transform: trailing data");
    AffineTransform t{v[0], v[1], v[3], v[4], v[2], v[5]};
    if (!t.finite()) throw ParseError("transform: non-finite value");
    return t;
}

inline AffineTransform load_transform(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw CalibrationMissing("cannot open " + path);
    return parse_transform(in);
}

inline void save_transform(const std::string& path, const AffineTransform& t)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << format_transform(t);
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace thermoscreen
