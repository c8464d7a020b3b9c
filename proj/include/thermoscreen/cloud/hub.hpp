#pragma once

// Alert fan-out. Publishers enqueue and return at once; a single worker thread
// owns the subscriber list and hands each frame to every live subscriber.
// Subscriptions travel through the same queue, so a backlog snapshot taken
// under the store lock is ordered correctly against later alerts.

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace thermoscreen::cloud {

using Frame = std::shared_ptr<const std::string>;

class Subscriber {
public:
    virtual ~Subscriber() = default;
    // Must not block. Returns false once the subscriber is gone for good.
    // Backlog frames are already bounded by the store and skip any queue cap.
    virtual bool offer(const Frame& frame, bool backlog = false) = 0;
};

struct HubStats {
    std::uint64_t broadcasts = 0;
    std::uint64_t deliveries = 0;
    std::uint64_t subscribers = 0;
};

class AlertHub {
public:
    AlertHub() : worker_([this] { run(); }) {}

    AlertHub(const AlertHub&) = delete;
    AlertHub& operator=(const AlertHub&) = delete;

    ~AlertHub() { stop(); }

    void publish(std::string frame) { push(Publish{std::make_shared<const std::string>(std::move(frame))}); }

    // Sends `backlog` to this subscriber only, then adds it to the broadcast set.
    void subscribe(std::weak_ptr<Subscriber> sub, std::vector<std::string> backlog)
    {
        push(Subscribe{std::move(sub), std::move(backlog)});
    }

    // Sends `frame` to every live subscriber; returns how many accepted it.
    // Only call from the worker or while no worker runs (tests).
    std::size_t deliver(const Frame& frame)
    {
        std::size_t n = 0;
        for (auto it = subs_.begin(); it != subs_.end();) {
            auto s = it->lock();
            if (s && s->offer(frame)) {
                ++n;
                ++it;
            } else {
                it = subs_.erase(it);
            }
        }
        std::lock_guard lock(mu_);
        ++stats_.broadcasts;
        stats_.deliveries += n;
        stats_.subscribers = subs_.size();
        return n;
    }

    // Blocks until every command queued so far has been handled.
    void flush()
    {
        std::unique_lock lock(mu_);
        const auto target = enqueued_;
        done_cv_.wait(lock, [&] { return handled_ >= target || stopped_; });
    }

    HubStats stats() const
    {
        std::lock_guard lock(mu_);
        return stats_;
    }

    void stop()
    {
        {
            std::lock_guard lock(mu_);
            if (stopped_) return;
            stopped_ = true;
        }
        cv_.notify_all();
        done_cv_.notify_all();
        if (worker_.joinable()) worker_.join();
    }

private:
    struct Publish {
        Frame frame;
    };
    struct Subscribe {
        std::weak_ptr<Subscriber> sub;
        std::vector<std::string> backlog;
    };
    using Command = std::variant<Publish, Subscribe>;

    void push(Command c)
    {
        {
            std::lock_guard lock(mu_);
            if (stopped_) return;
            queue_.push_back(std::move(c));
            ++enqueued_;
        }
        cv_.notify_one();
    }

    void run()
    {
        for (;;) {
            Command c;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return stopped_ || !queue_.empty(); });
                if (stopped_) return;
                c = std::move(queue_.front());
                queue_.pop_front();
            }
            if (auto* p = std::get_if<Publish>(&c)) {
                deliver(p->frame);
            } else {
                auto& s = std::get<Subscribe>(c);
                if (auto sub = s.sub.lock()) {
                    bool alive = true;
                    for (auto& f : s.backlog)
                        alive = alive && sub->offer(std::make_shared<const std::string>(std::move(f)), true);
                    const bool known = std::any_of(subs_.begin(), subs_.end(), [&](const auto& w) {
                        return !w.owner_before(s.sub) && !s.sub.owner_before(w);
                    });
                    if (alive && !known) subs_.push_back(s.sub);
                }
                std::lock_guard lock(mu_);
                stats_.subscribers = subs_.size();
            }
            {
                std::lock_guard lock(mu_);
                ++handled_;
            }
            done_cv_.notify_all();
        }
    }

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::deque<Command> queue_;
    std::uint64_t enqueued_ = 0;
    std::uint64_t handled_ = 0;
    bool stopped_ = false;
    HubStats stats_;
    std::vector<std::weak_ptr<Subscriber>> subs_;  // worker-owned
    std::thread worker_;
};

}  // namespace thermoscreen::cloud
