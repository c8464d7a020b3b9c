#pragma once

// Radiometric thermal frames stored as centikelvin u16, their binary file
// format, and forehead temperature extraction with the sensor's accuracy
// envelope (+-3 C or +-5 %, whichever is larger).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "thermoscreen/error.hpp"
#include "thermoscreen/geometry.hpp"

namespace thermoscreen {

inline constexpr double kKelvinOffset = 273.15;

inline double centikelvin_to_celsius(double ck) { return ck / 100.0 - kKelvinOffset; }

inline std::uint16_t celsius_to_centikelvin(double c)
{
    const double ck = std::round((c + kKelvinOffset) * 100.0);
    return static_cast<std::uint16_t>(std::clamp(ck, 0.0, 65535.0));
}

struct ThermalMetadata {
    std::string device_id;
    std::uint64_t timestamp_ms = 0;
    double emissivity = 0.98;

    friend bool operator==(const ThermalMetadata&, const ThermalMetadata&) = default;
};

struct ThermalFrame {
    int width = kThermalFrame.width;
    int height = kThermalFrame.height;
    std::vector<std::uint16_t> values;  // row-major, top-to-bottom
    ThermalMetadata meta;

    static ThermalFrame filled(FrameSize size, std::uint16_t value)
    {
        ThermalFrame f;
        f.width = size.width;
        f.height = size.height;
        f.values.assign(static_cast<std::size_t>(size.width) * static_cast<std::size_t>(size.height),
                        value);
        return f;
    }

    FrameSize size() const { return {width, height}; }

    std::uint16_t at(int x, int y) const
    {
        return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                      static_cast<std::size_t>(x)];
    }

    std::uint16_t& at(int x, int y)
    {
        return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                      static_cast<std::size_t>(x)];
    }

    double celsius(int x, int y) const { return centikelvin_to_celsius(at(x, y)); }
};

// ---------------------------------------------------------------------------
// File format: "THRM", u8 version (1), u16 LE width, u16 LE height, then
// width*height u16 LE centikelvin values.
// ---------------------------------------------------------------------------

inline constexpr std::uint8_t kThermalFileVersion = 1;
inline constexpr std::size_t kThermalHeaderBytes = 9;

inline std::vector<std::uint8_t> save_frame(const ThermalFrame& f)
{
    if (f.width <= 0 || f.height <= 0 || f.width > 0xFFFF || f.height > 0xFFFF)
        throw DimensionMismatch("frame dimensions out of range");
    const std::size_t n = static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height);
    if (f.values.size() != n) throw DimensionMismatch("value count does not match width*height");

    std::vector<std::uint8_t> out;
    out.reserve(kThermalHeaderBytes + 2 * n);
    out.insert(out.end(), {'T', 'H', 'R', 'M', kThermalFileVersion});
    auto put16 = [&](std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v & 0xFF));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    };
    put16(static_cast<std::uint16_t>(f.width));
    put16(static_cast<std::uint16_t>(f.height));
    for (auto v : f.values) put16(v);
    return out;
}

// `expected` pins the sensor geometry; pass {0,0} to accept any dimensions.
inline ThermalFrame load_frame(std::span<const std::uint8_t> bytes, FrameSize expected = kThermalFrame)
{
    if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "THRM"))
        throw BadMagic("not a THRM file");
    if (bytes.size() < kThermalHeaderBytes) throw TruncatedPayload("header cut short");
    if (bytes[4] != kThermalFileVersion)
        throw BadMagic("unsupported version " + std::to_string(bytes[4]));
    auto get16 = [&](std::size_t off) {
        return static_cast<std::uint16_t>(bytes[off] | (bytes[off + 1] << 8));
    };
    ThermalFrame f;
    f.width = get16(5);
    f.height = get16(7);
    if (f.width == 0 || f.height == 0) throw DimensionMismatch("zero dimension");
    if (expected.width != 0 && (f.width != expected.width || f.height != expected.height)) {
        throw DimensionMismatch(std::to_string(f.width) + "x" + std::to_string(f.height) +
                                " != expected " + std::to_string(expected.width) + "x" +
                                std::to_string(expected.height));
    }
    const std::size_t n = static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height);
    const std::size_t want = kThermalHeaderBytes + 2 * n;
    if (bytes.size() < want) {
        throw TruncatedPayload("have " + std::to_string(bytes.size()) + " bytes, need " +
                               std::to_string(want));
    }
    if (bytes.size() > want) throw DimensionMismatch("trailing bytes after payload");
    f.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) f.values[i] = get16(kThermalHeaderBytes + 2 * i);
    return f;
}

inline void write_frame_file(const std::string& path, const ThermalFrame& f)
{
    const auto bytes = save_frame(f);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

inline ThermalFrame read_frame_file(const std::string& path, FrameSize expected = kThermalFrame)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_frame(bytes, expected);
}

// Sidecar: `key: value` lines for device_id, timestamp_ms, emissivity.
inline std::string format_metadata(const ThermalMetadata& m)
{
    std::ostringstream os;
    os << "device_id: " << m.device_id << '\n'
       << "timestamp_ms: " << m.timestamp_ms << '\n'
       << "emissivity: " << m.emissivity << '\n';
    return os.str();
}

inline ThermalMetadata parse_metadata(std::istream& in)
{
    ThermalMetadata m;
    std::string line;
    while (std::getline(in, line)) {
        const auto colon = line.find(':');
        if (line.empty() || line[0] == '#') continue;
        if (colon == std::string::npos) throw ParseError("metadata line without ':'");
        std::string key = line.substr(0, colon);
        std::string value = line.substr(colon + 1);
        auto trim = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
        };
        trim(key);
        trim(value);
        try {
            if (key == "device_id") m.device_id = value;
            else if (key == "timestamp_ms") m.timestamp_ms = std::stoull(value);
            else if (key == "emissivity") m.emissivity = std::stod(value);
        } catch (const std::logic_error&) {
            throw ParseError("bad metadata value for " + key);
        }
    }
    return m;
}

// Scene plausibility: the sensor covers roughly 5..120 C; anything outside
// -5..120 C is flagged. Returns the fraction of implausible pixels.
inline double implausible_fraction(const ThermalFrame& f)
{
    if (f.values.empty()) return 1.0;
    const std::uint16_t lo = celsius_to_centikelvin(-5.0);
    const std::uint16_t hi = celsius_to_centikelvin(120.0);
    const auto bad = std::ranges::count_if(f.values, [&](std::uint16_t v) { return v < lo || v > hi; });
    return static_cast<double>(bad) / static_cast<double>(f.values.size());
}

inline bool is_plausible(const ThermalFrame& f) { return implausible_fraction(f) == 0.0; }

// ---------------------------------------------------------------------------
// Temperature extraction
// ---------------------------------------------------------------------------

enum class Aggregation { Mean, Max, Percentile };

struct TemperatureConfig {
    Aggregation method = Aggregation::Percentile;
    double percentile = 95.0;  // (0, 100]

    void validate() const
    {
        if (method == Aggregation::Percentile && !(percentile > 0.0 && percentile <= 100.0))
            throw InvalidConfig("percentile must be in (0, 100]");
    }

    std::string name() const
    {
        switch (method) {
            case Aggregation::Mean: return "mean";
            case Aggregation::Max: return "max";
            case Aggregation::Percentile: {
                std::ostringstream os;
                os << "percentile(" << percentile << ")";
                return os.str();
            }
        }
        return "?";
    }
};

// Sensor spec: +-3 C or +-5 %, whichever is larger.
inline double sensor_uncertainty_c(double celsius) { return std::max(3.0, 0.05 * std::abs(celsius)); }

struct TemperatureEstimate {
    double celsius = 0.0;
    std::string method;
    std::size_t sample_count = 0;
    double uncertainty_c = 0.0;
};

// Nearest rank: the ceil(q/100 * n)-th smallest value (1-based).
inline std::uint16_t nearest_rank_percentile(std::vector<std::uint16_t> v, double q)
{
    if (v.empty()) throw EmptyRoi("no samples");
    const auto n = v.size();
    auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
    return v[rank - 1];
}

// Aggregates every pixel the ROI touches after clipping to the frame.
inline TemperatureEstimate extract_temperature(const ThermalFrame& frame, const BBox& roi,
                                               const TemperatureConfig& cfg = {})
{
    cfg.validate();
    const auto clipped = clip(roi, frame.size());
    if (!clipped || clipped->area() < 1.0) throw EmptyRoi("roi covers less than one pixel of the frame");

    const int x0 = static_cast<int>(std::floor(clipped->left));
    const int y0 = static_cast<int>(std::floor(clipped->top));
    const int x1 = std::min(frame.width, static_cast<int>(std::ceil(clipped->right())));
    const int y1 = std::min(frame.height, static_cast<int>(std::ceil(clipped->bottom())));
    std::vector<std::uint16_t> samples;
    samples.reserve(static_cast<std::size_t>((x1 - x0) * (y1 - y0)));
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) samples.push_back(frame.at(x, y));

    double ck = 0.0;
    switch (cfg.method) {
        case Aggregation::Mean:
            ck = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
            break;
        case Aggregation::Max:
            ck = *std::ranges::max_element(samples);
            break;
        case Aggregation::Percentile:
            ck = nearest_rank_percentile(samples, cfg.percentile);
            break;
    }
    TemperatureEstimate est;
    est.celsius = centikelvin_to_celsius(ck);
    est.method = cfg.name();
    est.sample_count = samples.size();
    est.uncertainty_c = sensor_uncertainty_c(est.celsius);
    return est;
}

// Maps an RGB-frame box into the thermal frame: the axis-aligned hull of the
// four transformed corners, clipped to the thermal frame.
inline BBox rgb_roi_to_thermal(const BBox& roi, const AffineTransform& t,
                               FrameSize thermal = kThermalFrame)
{
    if (!t.finite()) throw InvalidConfig("non-finite transform");
    const std::array<Point2, 4> corners{Point2{roi.left, roi.top}, Point2{roi.right(), roi.top},
                                        Point2{roi.left, roi.bottom()}, Point2{roi.right(), roi.bottom()}};
    double l = std::numeric_limits<double>::infinity(), t0 = l;
    double r = -l, b = -l;
    for (const auto& c : corners) {
        const Point2 p = apply(t, c);
        l = std::min(l, p.x);
        r = std::max(r, p.x);
        t0 = std::min(t0, p.y);
        b = std::max(b, p.y);
    }
    const auto clipped = clip({l, t0, r - l, b - t0}, thermal);
    if (!clipped) throw OutOfFrame("roi maps outside the thermal frame");
    return *clipped;
}

}  // namespace thermoscreen
