#pragma once

// Transport-independent cloud logic: HTTP routing over the store, and the
// glue between store notifications and the fan-out hub.

#include <charconv>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "thermoscreen/cloud/hub.hpp"
#include "thermoscreen/cloud/store.hpp"
#include "thermoscreen/cloud/wire.hpp"

namespace thermoscreen::cloud {

struct HttpResult {
    int status = 200;
    std::string body;
};

namespace detail {

inline int hex_value(char c)
{
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

inline std::string percent_decode(std::string_view s)
{
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '+') {
            out.push_back(' ');
        } else if (s[i] == '%' && i + 2 < s.size() && hex_value(s[i + 1]) >= 0 && hex_value(s[i + 2]) >= 0) {
            out.push_back(static_cast<char>(hex_value(s[i + 1]) * 16 + hex_value(s[i + 2])));
            i += 2;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

inline std::map<std::string, std::string> parse_query(std::string_view q)
{
    std::map<std::string, std::string> out;
    while (!q.empty()) {
        const auto amp = q.find('&');
        const auto part = q.substr(0, amp);
        if (!part.empty()) {
            const auto eq = part.find('=');
            if (eq == std::string_view::npos) out[percent_decode(part)] = "";
            else out[percent_decode(part.substr(0, eq))] = percent_decode(part.substr(eq + 1));
        }
        if (amp == std::string_view::npos) break;
        q.remove_prefix(amp + 1);
    }
    return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v)
{
    std::uint64_t n = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (ec != std::errc{} || p != v.data() + v.size() || v.empty())
        throw BadFilter(key + " must be a non-negative integer");
    return n;
}

}  // namespace detail

inline ReadingFilter parse_filter(std::string_view query)
{
    ReadingFilter f;
    for (const auto& [k, v] : detail::parse_query(query)) {
        if (k == "device_id") f.device_id = v;
        else if (k == "since_ms") f.since_ms = detail::parse_u64(k, v);
        else if (k == "after_id") f.after_id = detail::parse_u64(k, v);
        else if (k == "limit") f.limit = detail::parse_u64(k, v);
        else throw BadFilter("unknown parameter '" + k + "'");
    }
    return f;
}

class CloudService {
public:
    explicit CloudService(StoreConfig cfg) : store_(std::move(cfg))
    {
        store_.set_listener({[this](const AlertEvent& a) { hub_.publish(alert_frame(a).dump()); },
                             [this](const AlertEvent& a) { hub_.publish(ack_update_frame(a.id, *a.acked_by).dump()); }});
    }

    ReadingStore& store() { return store_; }
    AlertHub& hub() { return hub_; }

    HttpResult handle(std::string_view method, std::string_view target, const std::string& body)
    {
        const auto qpos = target.find('?');
        const auto path = target.substr(0, qpos);
        const auto query = qpos == std::string_view::npos ? std::string_view{} : target.substr(qpos + 1);

        if (path == "/api/v1/readings") {
            if (method == "POST") return post_reading(body);
            if (method == "GET") return get_readings(query);
            return {405, errors_body({"method not allowed"}).dump()};
        }
        if (path == "/api/v1/health") {
            if (method != "GET") return {405, errors_body({"method not allowed"}).dump()};
            return {200, health_body(store_.reading_count(), store_.unacked_count()).dump()};
        }
        return {404, errors_body({"not found"}).dump()};
    }

    // Console subscription: backlog snapshot and hub registration happen under
    // the store lock.
    void subscribe(const std::shared_ptr<Subscriber>& sub)
    {
        store_.with_backlog([&](const std::vector<AlertEvent>& backlog) {
            std::vector<std::string> frames;
            for (const auto& a : backlog) frames.push_back(alert_frame(a).dump());
            hub_.subscribe(sub, std::move(frames));
        });
    }

    AckResult ack(std::uint64_t alert_id, const std::string& console_id) { return store_.ack(alert_id, console_id); }

private:
    HttpResult post_reading(const std::string& body)
    {
        const auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) return {400, errors_body({"body is not valid JSON"}).dump()};
        const auto parsed = parse_reading(j);
        if (!parsed.reading) return {parsed.status, errors_body(parsed.errors).dump()};
        const auto r = store_.ingest(*parsed.reading);
        return {r.status == IngestStatus::Created ? 201 : 200, id_body(r.id).dump()};
    }

    HttpResult get_readings(std::string_view query)
    {
        try {
            const auto page = store_.query(parse_filter(query));
            return {200, page_body(page.records, page.next_after_id).dump()};
        } catch (const BadFilter& e) {
            return {400, errors_body({e.what()}).dump()};
        }
    }

    // The hub must outlive the store's listener calls, so it is declared first.
    AlertHub hub_;
    ReadingStore store_;
};

}  // namespace thermoscreen::cloud
