#pragma once

// TemperatureReading and its JSON body, shared by the edge uploader and the
// cloud ingest endpoint.

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace thermoscreen {

struct Location {
    double lat = 0.0;
    double lon = 0.0;

    friend bool operator==(const Location&, const Location&) = default;
};

struct TemperatureReading {
    std::string device_id;
    std::uint64_t seq = 0;
    std::uint64_t timestamp_ms = 0;
    Location location;
    double temperature_c = 0.0;
    bool mask_worn = false;
    bool alignment_ok = true;

    friend bool operator==(const TemperatureReading&, const TemperatureReading&) = default;
};

// Readings outside this band are still uploaded, flagged alignment_ok=false.
inline constexpr double kValidReadingLowC = 25.0;
inline constexpr double kValidReadingHighC = 45.0;

// Physical range the cloud accepts at all (422 beyond it).
inline constexpr double kAcceptLowC = -50.0;
inline constexpr double kAcceptHighC = 150.0;

inline nlohmann::ordered_json to_json(const Location& l)
{
    return nlohmann::ordered_json{{"lat", l.lat}, {"lon", l.lon}};
}

inline nlohmann::ordered_json to_json(const TemperatureReading& r)
{
    return nlohmann::ordered_json{{"device_id", r.device_id},         {"seq", r.seq},
                                  {"timestamp_ms", r.timestamp_ms},   {"location", to_json(r.location)},
                                  {"temperature_c", r.temperature_c}, {"mask_worn", r.mask_worn},
                                  {"alignment_ok", r.alignment_ok}};
}

struct ReadingParse {
    std::optional<TemperatureReading> reading;
    int status = 200;  // 400 malformed, 422 out of range
    std::vector<std::string> errors;
};

// Strict parse of a POST body: wrong or missing types are 400, values outside
// their domain are 422.
inline ReadingParse parse_reading(const nlohmann::json& j)
{
    ReadingParse out;
    auto malformed = [&](const std::string& e) {
        out.status = 400;
        out.errors.push_back(e);
    };
    if (!j.is_object()) {
        malformed("body must be a JSON object");
        return out;
    }
    TemperatureReading r;
    auto need = [&](const char* key) -> const nlohmann::json* {
        auto it = j.find(key);
        if (it == j.end()) {
            malformed(std::string(key) + ": missing");
            return nullptr;
        }
        return &*it;
    };
    if (auto v = need("device_id")) {
        if (v->is_string()) r.device_id = v->get<std::string>();
        else malformed("device_id: expected string");
    }
    if (auto v = need("seq")) {
        if (v->is_number_unsigned()) r.seq = v->get<std::uint64_t>();
        else malformed("seq: expected unsigned integer");
    }
    if (auto v = need("timestamp_ms")) {
        if (v->is_number_unsigned()) r.timestamp_ms = v->get<std::uint64_t>();
        else malformed("timestamp_ms: expected unsigned integer");
    }
    if (auto v = need("location")) {
        if (v->is_object() && v->contains("lat") && v->contains("lon") && v->at("lat").is_number() &&
            v->at("lon").is_number()) {
            r.location = {v->at("lat").get<double>(), v->at("lon").get<double>()};
        } else {
            malformed("location: expected {\"lat\": number, \"lon\": number}");
        }
    }
    if (auto v = need("temperature_c")) {
        if (v->is_number()) r.temperature_c = v->get<double>();
        else malformed("temperature_c: expected number");
    }
    if (auto v = need("mask_worn")) {
        if (v->is_boolean()) r.mask_worn = v->get<bool>();
        else malformed("mask_worn: expected boolean");
    }
    if (auto v = need("alignment_ok")) {
        if (v->is_boolean()) r.alignment_ok = v->get<bool>();
        else malformed("alignment_ok: expected boolean");
    }
    if (out.status == 400) return out;

    if (r.device_id.empty() || r.device_id.size() > 128) out.errors.push_back("device_id: length must be 1..128");
    if (!(r.location.lat >= -90.0 && r.location.lat <= 90.0)) out.errors.push_back("location.lat: outside [-90, 90]");
    if (!(r.location.lon >= -180.0 && r.location.lon <= 180.0))
        out.errors.push_back("location.lon: outside [-180, 180]");
    if (!(std::isfinite(r.temperature_c) && r.temperature_c >= kAcceptLowC && r.temperature_c <= kAcceptHighC))
        out.errors.push_back("temperature_c: outside [-50, 150]");
    if (!out.errors.empty()) {
        out.status = 422;
        return out;
    }
    out.reading = r;
    return out;
}

}  // namespace thermoscreen
