#pragma once

// Agent configuration: UTF-8 "key = value" text, '#' starts a comment.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "thermoscreen/detection.hpp"
#include "thermoscreen/error.hpp"
#include "thermoscreen/geometry.hpp"
#include "thermoscreen/reading.hpp"
#include "thermoscreen/thermal.hpp"

namespace thermoscreen::edge {

struct RetryPolicy {
    std::chrono::milliseconds initial{500};
    double multiplier = 2.0;
    std::chrono::milliseconds max{30000};
    double jitter = 0.2;  // +-fraction of the nominal delay

    void validate() const
    {
        if (initial.count() < 1) throw InvalidConfig("retry.initial_ms must be >= 1");
        if (!(multiplier >= 1.0)) throw InvalidConfig("retry.multiplier must be >= 1");
        if (max < initial) throw InvalidConfig("retry.max_ms must be >= retry.initial_ms");
        if (!(jitter >= 0.0 && jitter < 1.0)) throw InvalidConfig("retry.jitter must be in [0, 1)");
    }

    // Nominal delay before retry number `attempt` (1-based), capped, without jitter.
    std::chrono::milliseconds nominal(int attempt) const
    {
        double d = static_cast<double>(initial.count());
        for (int i = 1; i < attempt && d < static_cast<double>(max.count()); ++i) d *= multiplier;
        return std::chrono::milliseconds(
            static_cast<std::int64_t>(std::min(d, static_cast<double>(max.count()))));
    }

    // `u` in [-1, 1] scales the jitter band.
    std::chrono::milliseconds delay(int attempt, double u) const
    {
        const double d = static_cast<double>(nominal(attempt).count()) * (1.0 + jitter * u);
        return std::chrono::milliseconds(static_cast<std::int64_t>(std::max(1.0, d)));
    }
};

struct AgentConfig {
    std::string device_id;
    Location location;
    std::string cloud_url = "http://127.0.0.1:8080";
    std::string transform_path;
    std::size_t queue_capacity = 1024;
    RetryPolicy retry;
    std::string watch_dir;
    std::chrono::milliseconds pairing_timeout{2000};
    std::chrono::milliseconds drain_deadline{10000};
    std::chrono::milliseconds request_timeout{2000};

    CascadeConfig cascade;
    double detector_noise = 0.0;
    std::uint64_t detector_seed = 0;
    double mask_threshold = 0.5;
    ForeheadRoiConfig roi;
    TemperatureConfig temperature;

    void validate() const
    {
        if (device_id.empty()) throw InvalidConfig("device_id is required");
        if (!(location.lat >= -90.0 && location.lat <= 90.0)) throw InvalidConfig("location.lat outside [-90, 90]");
        if (!(location.lon >= -180.0 && location.lon <= 180.0))
            throw InvalidConfig("location.lon outside [-180, 180]");
        if (queue_capacity < 1) throw InvalidConfig("queue_capacity must be >= 1");
        if (!(mask_threshold >= 0.0 && mask_threshold <= 1.0)) throw InvalidConfig("mask_threshold in [0, 1]");
        if (!(detector_noise >= 0.0)) throw InvalidConfig("detector.score_noise must be >= 0");
        retry.validate();
        cascade.validate();
        roi.validate();
        temperature.validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InvalidConfig(key + ": expected a number, got '" + v + "'");
    }
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
        const auto n = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw InvalidConfig(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

}  // namespace detail

inline std::map<std::string, std::string> parse_key_values(std::istream& in)
{
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidConfig("line " + std::to_string(lineno) + ": expected key = value");
        const auto key = detail::trim(line.substr(0, eq));
        if (key.empty()) throw InvalidConfig("line " + std::to_string(lineno) + ": empty key");
        kv[key] = detail::trim(line.substr(eq + 1));
    }
    return kv;
}

// Unknown keys are rejected so typos surface as config errors.
inline AgentConfig parse_agent_config(std::istream& in, const char* cloud_url_override = nullptr)
{
    AgentConfig c;
    using ms = std::chrono::milliseconds;
    for (const auto& [k, v] : parse_key_values(in)) {
        if (k == "device_id") c.device_id = v;
        else if (k == "location.lat") c.location.lat = detail::to_double(k, v);
        else if (k == "location.lon") c.location.lon = detail::to_double(k, v);
        else if (k == "cloud_url") c.cloud_url = v;
        else if (k == "transform_path") c.transform_path = v;
        else if (k == "queue_capacity") c.queue_capacity = detail::to_uint(k, v);
        else if (k == "retry.initial_ms") c.retry.initial = ms(detail::to_uint(k, v));
        else if (k == "retry.multiplier") c.retry.multiplier = detail::to_double(k, v);
        else if (k == "retry.max_ms") c.retry.max = ms(detail::to_uint(k, v));
        else if (k == "retry.jitter") c.retry.jitter = detail::to_double(k, v);
        else if (k == "watch_dir") c.watch_dir = v;
        else if (k == "pairing_timeout_ms") c.pairing_timeout = ms(detail::to_uint(k, v));
        else if (k == "drain_deadline_ms") c.drain_deadline = ms(detail::to_uint(k, v));
        else if (k == "request_timeout_ms") c.request_timeout = ms(detail::to_uint(k, v));
        else if (k == "detector.min_face_px") c.cascade.min_face_px = detail::to_double(k, v);
        else if (k == "detector.score_noise") c.detector_noise = detail::to_double(k, v);
        else if (k == "detector.seed") c.detector_seed = detail::to_uint(k, v);
        else if (k == "mask_threshold") c.mask_threshold = detail::to_double(k, v);
        else if (k == "roi_fraction") c.roi.roi_fraction = detail::to_double(k, v);
        else if (k == "temperature.method") {
            if (v == "mean") c.temperature.method = Aggregation::Mean;
            else if (v == "max") c.temperature.method = Aggregation::Max;
            else if (v == "percentile") c.temperature.method = Aggregation::Percentile;
            else throw InvalidConfig("temperature.method: expected mean, max or percentile");
        } else if (k == "temperature.percentile") c.temperature.percentile = detail::to_double(k, v);
        else throw InvalidConfig("unknown key '" + k + "'");
    }
    if (cloud_url_override != nullptr && *cloud_url_override != '\0') c.cloud_url = cloud_url_override;
    c.validate();
    return c;
}

inline AgentConfig load_agent_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open config " + path);
    return parse_agent_config(in, std::getenv("THERMO_CLOUD_URL"));
}

}  // namespace thermoscreen::edge
