#pragma once

// Durable reading store: an append-only newline-delimited JSON log plus an
// in-memory index rebuilt by replaying the log on open. One mutex makes the
// store a single writer; listeners run under it so alert and ack
// notifications leave in log order.
//
// Log lines:
//   {"t":"r","id":1,"ms":..,"reading":{..},"alert":{"id":1,"reason":"FEVER"}}
//   {"t":"a","alert_id":1,"console_id":"ops-1"}

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "thermoscreen/cloud/wire.hpp"
#include "thermoscreen/error.hpp"
#include "thermoscreen/reading.hpp"

namespace thermoscreen::cloud {

// Points where a test hook may abort an ingest to emulate a crash.
enum class KillPoint { BeforeAppend, MidAppend, AfterAppend };

// Thrown by kill hooks. Not an Error: a crash is not a handled condition.
struct SimulatedCrash {
    KillPoint where;
};

struct StoreConfig {
    std::filesystem::path data_dir;
    AlertConfig alerts;
    bool fsync = true;
    std::function<void(KillPoint)> kill_hook;
    std::function<std::uint64_t()> now_ms = [] {
        return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                              std::chrono::system_clock::now().time_since_epoch())
                                              .count());
    };
};

enum class IngestStatus { Created, Duplicate };

struct IngestResult {
    IngestStatus status = IngestStatus::Created;
    std::uint64_t id = 0;
    std::optional<AlertEvent> alert;  // only on Created
};

struct AckResult {
    bool found = false;
    bool changed = false;  // false when already acked (first ack wins)
    AlertEvent alert;
};

struct ReadingFilter {
    std::optional<std::string> device_id{};
    std::optional<std::uint64_t> since_ms{};
    std::uint64_t after_id = 0;
    std::size_t limit = 100;
};

struct ReadingPage {
    std::vector<StoreRecord> records;
    std::optional<std::uint64_t> next_after_id;  // set when more records match
};

struct StoreListener {
    std::function<void(const AlertEvent&)> on_alert;
    std::function<void(const AlertEvent&)> on_ack;
};

inline constexpr std::size_t kMaxPageLimit = 1000;

class ReadingStore {
public:
    explicit ReadingStore(StoreConfig cfg) : cfg_(std::move(cfg))
    {
        std::error_code ec;
        std::filesystem::create_directories(cfg_.data_dir, ec);
        if (ec) throw IoError("cannot create " + cfg_.data_dir.string() + ": " + ec.message());
        replay();
        fd_ = ::open(log_path().c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) throw IoError("cannot open " + log_path().string() + ": " + std::strerror(errno));
    }

    ReadingStore(const ReadingStore&) = delete;
    ReadingStore& operator=(const ReadingStore&) = delete;

    ~ReadingStore()
    {
        if (fd_ >= 0) ::close(fd_);
    }

    std::filesystem::path log_path() const { return cfg_.data_dir / "readings.log"; }

    void set_listener(StoreListener l)
    {
        std::lock_guard lock(mu_);
        listener_ = std::move(l);
    }

    // The reading must already satisfy parse_reading's checks.
    IngestResult ingest(const TemperatureReading& r)
    {
        std::lock_guard lock(mu_);
        if (auto id = find_locked(r.device_id, r.seq)) return {IngestStatus::Duplicate, *id, std::nullopt};

        StoreRecord rec{records_.size() + 1, cfg_.now_ms(), r};
        auto alert = evaluate_alert(r, cfg_.alerts);
        if (alert) alert->id = alerts_.size() + 1;

        ordered_json line{{"t", "r"}, {"id", rec.id}, {"ms", rec.server_received_ms},
                          {"reading", thermoscreen::to_json(r)}};
        if (alert) line["alert"] = ordered_json{{"id", alert->id}, {"reason", reason_name(alert->reason)}};
        append_locked(line.dump() + "\n");

        apply_reading_locked(rec, alert);
        if (alert && listener_.on_alert) listener_.on_alert(*alert);
        return {IngestStatus::Created, rec.id, alert};
    }

    AckResult ack(std::uint64_t alert_id, const std::string& console_id)
    {
        std::lock_guard lock(mu_);
        if (alert_id == 0 || alert_id > alerts_.size()) return {};
        auto& a = alerts_[alert_id - 1];
        if (a.acked_by) return {true, false, a};
        append_locked(ordered_json{{"t", "a"}, {"alert_id", alert_id}, {"console_id", console_id}}.dump() + "\n");
        a.acked_by = console_id;
        unacked_.erase(alert_id);
        if (listener_.on_ack) listener_.on_ack(a);
        return {true, true, a};
    }

    ReadingPage query(const ReadingFilter& f) const
    {
        if (f.limit < 1 || f.limit > kMaxPageLimit) throw BadFilter("limit must be in [1, 1000]");
        if (f.device_id && f.device_id->empty()) throw BadFilter("device_id must be non-empty");
        std::lock_guard lock(mu_);
        ReadingPage page;
        auto matches = [&](const StoreRecord& r) {
            return r.id > f.after_id && (!f.since_ms || r.reading.timestamp_ms >= *f.since_ms);
        };
        auto visit = [&](const StoreRecord& r) {
            if (!matches(r)) return true;
            if (page.records.size() == f.limit) {
                page.next_after_id = page.records.back().id;
                return false;
            }
            page.records.push_back(r);
            return true;
        };
        if (f.device_id) {
            auto it = by_device_.find(*f.device_id);
            if (it == by_device_.end()) return page;
            for (auto id : it->second)
                if (!visit(records_[id - 1])) break;
        } else {
            for (std::size_t i = f.after_id; i < records_.size(); ++i)
                if (!visit(records_[i])) break;
        }
        return page;
    }

    std::vector<AlertEvent> unacked_alerts() const
    {
        std::lock_guard lock(mu_);
        return unacked_locked();
    }

    // Runs `f` with the unacked backlog while holding the store lock, so no
    // alert or ack can be published between the snapshot and `f` returning.
    template <class F>
    void with_backlog(F&& f) const
    {
        std::lock_guard lock(mu_);
        f(unacked_locked());
    }

    std::vector<AlertEvent> alerts() const
    {
        std::lock_guard lock(mu_);
        return alerts_;
    }

    std::uint64_t reading_count() const
    {
        std::lock_guard lock(mu_);
        return records_.size();
    }
    std::uint64_t alert_count() const
    {
        std::lock_guard lock(mu_);
        return alerts_.size();
    }
    std::uint64_t unacked_count() const
    {
        std::lock_guard lock(mu_);
        return unacked_.size();
    }
    std::uint64_t next_record_id() const { return reading_count() + 1; }
    std::uint64_t next_alert_id() const { return alert_count() + 1; }

    // Bytes of torn tail dropped by the last replay.
    std::size_t truncated_bytes() const { return truncated_; }

private:
    std::optional<std::uint64_t> find_locked(const std::string& device, std::uint64_t seq) const
    {
        auto it = dedupe_.find(device);
        if (it == dedupe_.end()) return std::nullopt;
        auto jt = it->second.find(seq);
        if (jt == it->second.end()) return std::nullopt;
        return jt->second;
    }

    std::vector<AlertEvent> unacked_locked() const
    {
        std::vector<AlertEvent> out;
        for (auto id : unacked_) out.push_back(alerts_[id - 1]);
        return out;
    }

    void apply_reading_locked(const StoreRecord& rec, const std::optional<AlertEvent>& alert)
    {
        records_.push_back(rec);
        dedupe_[rec.reading.device_id][rec.reading.seq] = rec.id;
        by_device_[rec.reading.device_id].push_back(rec.id);
        if (alert) {
            alerts_.push_back(*alert);
            unacked_.insert(alert->id);
        }
    }

    void write_all(const char* p, std::size_t n)
    {
        while (n > 0) {
            const auto w = ::write(fd_, p, n);
            if (w < 0) {
                if (errno == EINTR) continue;
                throw IoError(std::string("log append failed: ") + std::strerror(errno));
            }
            p += w;
            n -= static_cast<std::size_t>(w);
        }
    }

    void append_locked(const std::string& line)
    {
        if (cfg_.kill_hook) cfg_.kill_hook(KillPoint::BeforeAppend);
        if (cfg_.kill_hook) {
            // Half the line reaches the file before the hook gets a chance to crash.
            const auto half = line.size() / 2;
            write_all(line.data(), half);
            cfg_.kill_hook(KillPoint::MidAppend);
            write_all(line.data() + half, line.size() - half);
        } else {
            write_all(line.data(), line.size());
        }
        if (cfg_.fsync && ::fdatasync(fd_) != 0)
            throw IoError(std::string("fdatasync failed: ") + std::strerror(errno));
        if (cfg_.kill_hook) cfg_.kill_hook(KillPoint::AfterAppend);
    }

    // Complete lines are applied in order. A final line without its newline is
    // a torn write from a crash and is cut off; a malformed complete line means
    // the log is corrupt and opening fails.
    void replay()
    {
        const auto path = log_path();
        if (!std::filesystem::exists(path)) return;
        std::ifstream in(path, std::ios::binary);
        const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::size_t pos = 0, lineno = 0;
        while (pos < data.size()) {
            const auto nl = data.find('\n', pos);
            if (nl == std::string::npos) break;
            ++lineno;
            apply_line(data.substr(pos, nl - pos), lineno);
            pos = nl + 1;
        }
        if (pos < data.size()) {
            truncated_ = data.size() - pos;
            std::filesystem::resize_file(path, pos);
        }
    }

    void apply_line(const std::string& text, std::size_t lineno)
    {
        try {
            const auto j = nlohmann::json::parse(text);
            const auto t = j.at("t").get<std::string>();
            if (t == "r") {
                auto parsed = parse_reading(j.at("reading"));
                if (!parsed.reading) throw ParseError("invalid reading");
                StoreRecord rec{j.at("id").get<std::uint64_t>(), j.at("ms").get<std::uint64_t>(), *parsed.reading};
                if (rec.id != records_.size() + 1) throw ParseError("record ids not contiguous");
                if (find_locked(rec.reading.device_id, rec.reading.seq)) throw ParseError("duplicate reading");
                std::optional<AlertEvent> alert;
                if (j.contains("alert")) {
                    alert = evaluate_alert(rec.reading, AlertConfig{-1e300, true});
                    alert->reason = reason_from_name(j["alert"].at("reason").get<std::string>());
                    alert->id = j["alert"].at("id").get<std::uint64_t>();
                    if (alert->id != alerts_.size() + 1) throw ParseError("alert ids not contiguous");
                }
                apply_reading_locked(rec, alert);
            } else if (t == "a") {
                const auto id = j.at("alert_id").get<std::uint64_t>();
                if (id == 0 || id > alerts_.size()) throw ParseError("ack for unknown alert");
                alerts_[id - 1].acked_by = j.at("console_id").get<std::string>();
                unacked_.erase(id);
            } else {
                throw ParseError("unknown line type");
            }
        } catch (const std::exception& e) {
            throw IoError("corrupt log " + log_path().string() + " line " + std::to_string(lineno) + ": " +
                          e.what());
        }
    }

    StoreConfig cfg_;
    int fd_ = -1;
    mutable std::mutex mu_;
    StoreListener listener_;
    std::vector<StoreRecord> records_;
    std::vector<AlertEvent> alerts_;
    std::set<std::uint64_t> unacked_;
    std::unordered_map<std::string, std::unordered_map<std::uint64_t, std::uint64_t>> dedupe_;
    std::unordered_map<std::string, std::vector<std::uint64_t>> by_device_;
    std::size_t truncated_ = 0;
};

}  // namespace thermoscreen::cloud
