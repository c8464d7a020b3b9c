#pragma once

// Bounded FIFO between the pipeline and the cloud. submit() never touches the
// network; a worker thread sends the head of the queue, retrying with
// exponential backoff until it is acknowledged, rejected or dropped.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "thermoscreen/edge/config.hpp"
#include "thermoscreen/edge/transport.hpp"
#include "thermoscreen/reading.hpp"

namespace thermoscreen::edge {

enum class UploadOutcome { Ack, Queued, Dropped, Rejected };

inline const char* outcome_name(UploadOutcome o)
{
    switch (o) {
        case UploadOutcome::Ack: return "ack";
        case UploadOutcome::Queued: return "queued";
        case UploadOutcome::Dropped: return "dropped";
        case UploadOutcome::Rejected: return "rejected";
    }
    return "?";
}

// 201 created and 200/409 duplicate are acknowledgments; 400/422 are permanent
// rejections; anything else (including no response) is retried.
inline UploadOutcome classify_response(const TransportResponse& r)
{
    if (r.status == 201 || r.status == 200 || r.status == 409) return UploadOutcome::Ack;
    if (r.status == 400 || r.status == 422) return UploadOutcome::Rejected;
    return UploadOutcome::Queued;
}

struct UploaderStats {
    std::uint64_t produced = 0;
    std::uint64_t delivered = 0;
    std::uint64_t duplicates = 0;  // acknowledged as already stored
    std::uint64_t dropped = 0;
    std::uint64_t rejected = 0;
    std::uint64_t attempts = 0;
    std::uint64_t failures = 0;
    std::uint64_t pending = 0;  // still queued (includes the one in flight)
};

struct UploaderConfig {
    std::size_t capacity = 1024;
    RetryPolicy retry;
    std::uint64_t jitter_seed = 0;
};

class Uploader {
public:
    using Clock = std::chrono::steady_clock;
    // Called from the worker thread with each final outcome.
    using OutcomeCallback =
        std::function<void(const TemperatureReading&, UploadOutcome, Clock::time_point captured)>;

    Uploader(std::shared_ptr<Transport> transport, UploaderConfig cfg, OutcomeCallback on_outcome = {})
        : transport_(std::move(transport)), cfg_(cfg), on_outcome_(std::move(on_outcome)), rng_(cfg.jitter_seed)
    {
        if (cfg_.capacity < 1) throw InvalidConfig("queue_capacity must be >= 1");
        cfg_.retry.validate();
        worker_ = std::thread([this] { run(); });
    }

    Uploader(const Uploader&) = delete;
    Uploader& operator=(const Uploader&) = delete;

    ~Uploader() { shutdown(std::chrono::milliseconds(0)); }

    // Enqueues and returns Queued. A full queue drops its oldest waiting entry.
    UploadOutcome submit(const TemperatureReading& r, Clock::time_point captured = Clock::now())
    {
        std::vector<Entry> evicted;
        UploadOutcome result = UploadOutcome::Queued;
        {
            std::lock_guard lock(mu_);
            ++stats_.produced;
            if (stopping_) {
                ++stats_.dropped;
                evicted.push_back({r, captured});
                result = UploadOutcome::Dropped;
            } else {
                if (queue_.size() >= cfg_.capacity) {
                    // The head may be on the wire; evicting it could lose an ack.
                    const std::size_t victim = head_in_flight_ ? 1 : 0;
                    if (victim < queue_.size()) {
                        evicted.push_back(queue_[victim]);
                        queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(victim));
                        if (victim == 0) head_attempts_ = 0;
                    }
                    ++stats_.dropped;
                }
                if (queue_.size() < cfg_.capacity) {
                    queue_.push_back({r, captured});
                } else {
                    evicted.push_back({r, captured});
                    result = UploadOutcome::Dropped;
                }
            }
        }
        cv_.notify_all();
        for (const auto& e : evicted) notify(e, UploadOutcome::Dropped);
        return result;
    }

    // Stops accepting work, keeps sending until the queue is empty or the
    // deadline passes, then joins the worker. Idempotent.
    void shutdown(std::chrono::milliseconds drain_deadline)
    {
        {
            std::lock_guard lock(mu_);
            if (!stopping_) {
                stopping_ = true;
                deadline_ = Clock::now() + drain_deadline;
            }
        }
        cv_.notify_all();
        if (worker_.joinable()) worker_.join();
    }

    // Blocks until the queue is empty or the timeout expires.
    bool wait_idle(std::chrono::milliseconds timeout)
    {
        std::unique_lock lock(mu_);
        return idle_cv_.wait_for(lock, timeout, [this] { return queue_.empty(); });
    }

    UploaderStats stats() const
    {
        std::lock_guard lock(mu_);
        auto s = stats_;
        s.pending = queue_.size();
        return s;
    }

private:
    struct Entry {
        TemperatureReading reading;
        Clock::time_point captured;
    };

    void notify(const Entry& e, UploadOutcome o)
    {
        if (on_outcome_) on_outcome_(e.reading, o, e.captured);
    }

    void run()
    {
        std::unique_lock lock(mu_);
        for (;;) {
            cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (queue_.empty() || (stopping_ && Clock::now() >= deadline_)) break;

            const Entry head = queue_.front();
            head_in_flight_ = true;
            ++stats_.attempts;
            lock.unlock();
            const auto body = to_json(head.reading).dump();
            const auto res = transport_->post_reading(body);
            const auto outcome = classify_response(res);
            lock.lock();
            head_in_flight_ = false;

            if (outcome != UploadOutcome::Queued) {
                queue_.pop_front();
                head_attempts_ = 0;
                if (outcome == UploadOutcome::Ack) {
                    ++stats_.delivered;
                    if (res.status != 201) ++stats_.duplicates;
                } else {
                    ++stats_.rejected;
                }
                if (queue_.empty()) idle_cv_.notify_all();
                lock.unlock();
                notify(head, outcome);
                lock.lock();
                continue;
            }

            ++stats_.failures;
            ++head_attempts_;
            const double u = std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
            const auto due = Clock::now() + cfg_.retry.delay(head_attempts_, u);
            for (;;) {
                const auto until = stopping_ ? std::min(due, deadline_) : due;
                if (Clock::now() >= until) break;
                cv_.wait_until(lock, until);
            }
        }
        idle_cv_.notify_all();
    }

    std::shared_ptr<Transport> transport_;
    UploaderConfig cfg_;
    OutcomeCallback on_outcome_;
    std::mt19937_64 rng_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::deque<Entry> queue_;
    bool head_in_flight_ = false;
    int head_attempts_ = 0;
    bool stopping_ = false;
    Clock::time_point deadline_{};
    UploaderStats stats_;
    std::thread worker_;
};

}  // namespace thermoscreen::edge
