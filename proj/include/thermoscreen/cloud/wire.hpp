#pragma once

// Cloud-side records, the alert rule, and every JSON body and WebSocket frame
// the service emits or accepts.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "thermoscreen/error.hpp"
#include "thermoscreen/reading.hpp"

namespace thermoscreen::cloud {

using ordered_json = nlohmann::ordered_json;

enum class AlertReason { Fever, NoMask };

inline const char* reason_name(AlertReason r) { return r == AlertReason::Fever ? "FEVER" : "NO_MASK"; }

inline AlertReason reason_from_name(const std::string& s)
{
    if (s == "FEVER") return AlertReason::Fever;
    if (s == "NO_MASK") return AlertReason::NoMask;
    throw ParseError("unknown alert reason '" + s + "'");
}

struct AlertConfig {
    double fever_threshold_c = 37.3;
    bool mask_alerts = false;
};

struct AlertEvent {
    std::uint64_t id = 0;
    std::string device_id;
    std::uint64_t seq = 0;
    AlertReason reason = AlertReason::Fever;
    double temperature_c = 0.0;
    bool mask_worn = false;
    Location location;
    std::uint64_t timestamp_ms = 0;
    std::optional<std::string> acked_by;

    friend bool operator==(const AlertEvent&, const AlertEvent&) = default;
};

struct StoreRecord {
    std::uint64_t id = 0;
    std::uint64_t server_received_ms = 0;
    TemperatureReading reading;

    friend bool operator==(const StoreRecord&, const StoreRecord&) = default;
};

// FEVER at or above the threshold; NO_MASK only when enabled; FEVER wins when
// both apply. The returned event has id 0 until the store assigns one.
inline std::optional<AlertEvent> evaluate_alert(const TemperatureReading& r, const AlertConfig& cfg)
{
    std::optional<AlertReason> reason;
    if (r.temperature_c >= cfg.fever_threshold_c) reason = AlertReason::Fever;
    else if (cfg.mask_alerts && !r.mask_worn) reason = AlertReason::NoMask;
    if (!reason) return std::nullopt;
    AlertEvent a;
    a.device_id = r.device_id;
    a.seq = r.seq;
    a.reason = *reason;
    a.temperature_c = r.temperature_c;
    a.mask_worn = r.mask_worn;
    a.location = r.location;
    a.timestamp_ms = r.timestamp_ms;
    return a;
}

// ---------------------------------------------------------------------------
// HTTP bodies
// ---------------------------------------------------------------------------

inline ordered_json id_body(std::uint64_t id) { return ordered_json{{"id", id}}; }

inline ordered_json errors_body(const std::vector<std::string>& errors)
{
    return ordered_json{{"errors", errors}};
}

inline ordered_json to_json(const StoreRecord& r)
{
    ordered_json j{{"id", r.id}, {"server_received_ms", r.server_received_ms}};
    const auto body = thermoscreen::to_json(r.reading);
    for (const auto& [k, v] : body.items()) j[k] = v;
    return j;
}

inline ordered_json page_body(const std::vector<StoreRecord>& records, std::optional<std::uint64_t> next_after_id)
{
    ordered_json arr = ordered_json::array();
    for (const auto& r : records) arr.push_back(to_json(r));
    return ordered_json{{"records", std::move(arr)},
                        {"next_after_id", next_after_id ? ordered_json(*next_after_id) : ordered_json(nullptr)}};
}

inline ordered_json health_body(std::uint64_t readings, std::uint64_t alerts_unacked)
{
    return ordered_json{{"status", "ok"}, {"readings", readings}, {"alerts_unacked", alerts_unacked}};
}

// ---------------------------------------------------------------------------
// WebSocket frames
// ---------------------------------------------------------------------------

inline ordered_json alert_frame(const AlertEvent& a)
{
    return ordered_json{{"type", "alert"},
                        {"id", a.id},
                        {"reason", reason_name(a.reason)},
                        {"device_id", a.device_id},
                        {"temperature_c", a.temperature_c},
                        {"mask_worn", a.mask_worn},
                        {"location", thermoscreen::to_json(a.location)},
                        {"timestamp_ms", a.timestamp_ms}};
}

inline ordered_json ack_update_frame(std::uint64_t alert_id, const std::string& acked_by)
{
    return ordered_json{{"type", "ack_update"}, {"id", alert_id}, {"acked_by", acked_by}};
}

inline ordered_json subscribe_frame(const std::string& console_id)
{
    return ordered_json{{"type", "subscribe"}, {"console_id", console_id}};
}

inline ordered_json ack_frame(std::uint64_t alert_id, const std::string& console_id)
{
    return ordered_json{{"type", "ack"}, {"id", alert_id}, {"console_id", console_id}};
}

struct SubscribeMsg {
    std::string console_id;
};
struct AckMsg {
    std::uint64_t id = 0;
    std::string console_id;
};
struct ClientMsg {
    std::optional<SubscribeMsg> subscribe;
    std::optional<AckMsg> ack;
};

// Parses a console-to-server frame; throws ParseError on anything else.
inline ClientMsg parse_client_frame(const std::string& text)
{
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw ParseError("frame must be an object with a string \"type\"");
    const auto type = j["type"].get<std::string>();
    auto console = [&]() {
        if (!j.contains("console_id") || !j["console_id"].is_string() || j["console_id"].get<std::string>().empty())
            throw ParseError(type + ": console_id must be a non-empty string");
        return j["console_id"].get<std::string>();
    };
    ClientMsg m;
    if (type == "subscribe") {
        m.subscribe = SubscribeMsg{console()};
    } else if (type == "ack") {
        if (!j.contains("id") || !j["id"].is_number_unsigned()) throw ParseError("ack: id must be unsigned");
        m.ack = AckMsg{j["id"].get<std::uint64_t>(), console()};
    } else {
        throw ParseError("unknown frame type '" + type + "'");
    }
    return m;
}

// Server-to-console frame as seen by a client.
struct ServerFrame {
    std::string type;  // "alert" or "ack_update"
    AlertEvent alert;  // alert fields, or id + acked_by for ack_update
};

inline ServerFrame parse_server_frame(const std::string& text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        ServerFrame f;
        f.type = j.at("type").get<std::string>();
        f.alert.id = j.at("id").get<std::uint64_t>();
        if (f.type == "alert") {
            f.alert.reason = reason_from_name(j.at("reason").get<std::string>());
            f.alert.device_id = j.at("device_id").get<std::string>();
            f.alert.temperature_c = j.at("temperature_c").get<double>();
            f.alert.mask_worn = j.at("mask_worn").get<bool>();
            f.alert.location = {j.at("location").at("lat").get<double>(), j.at("location").at("lon").get<double>()};
            f.alert.timestamp_ms = j.at("timestamp_ms").get<std::uint64_t>();
        } else if (f.type == "ack_update") {
            f.alert.acked_by = j.at("acked_by").get<std::string>();
        } else {
            throw ParseError("unknown server frame '" + f.type + "'");
        }
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("server frame: ") + e.what());
    }
}

}  // namespace thermoscreen::cloud
