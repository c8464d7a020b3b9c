#pragma once

// How the uploader talks to the cloud. HttpTransport is the real client;
// FaultInjectingTransport wraps another transport and loses requests.

#include <httplib.h>

#include <chrono>
#include <memory>
#include <mutex>
#include <random>
#include <string>

namespace thermoscreen::edge {

struct TransportResponse {
    int status = 0;  // 0 when no response arrived
    std::string body;
    std::string error;

    bool network_failure() const { return status == 0; }
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual TransportResponse post_reading(const std::string& json_body) = 0;
};

class HttpTransport final : public Transport {
public:
    explicit HttpTransport(const std::string& cloud_url,
                           std::chrono::milliseconds timeout = std::chrono::milliseconds(2000))
        : client_(cloud_url)
    {
        client_.set_keep_alive(true);
        client_.set_connection_timeout(timeout);
        client_.set_read_timeout(timeout);
        client_.set_write_timeout(timeout);
    }

    TransportResponse post_reading(const std::string& json_body) override
    {
        auto res = client_.Post("/api/v1/readings", json_body, "application/json");
        if (!res) return {0, {}, httplib::to_string(res.error())};
        return {res->status, res->body, {}};
    }

private:
    httplib::Client client_;
};

// Drops `drop_rate` of requests. Half of the drops happen before the request
// is sent, the other half after the server processed it (response lost), so
// both retry paths and server-side dedupe get exercised.
class FaultInjectingTransport final : public Transport {
public:
    FaultInjectingTransport(std::shared_ptr<Transport> inner, double drop_rate, std::uint64_t seed)
        : inner_(std::move(inner)), drop_rate_(drop_rate), rng_(seed)
    {}

    TransportResponse post_reading(const std::string& json_body) override
    {
        bool drop = false, after = false;
        {
            std::lock_guard lock(mu_);
            drop = unit_(rng_) < drop_rate_;
            after = unit_(rng_) < 0.5;
            if (drop) ++(after ? dropped_after_ : dropped_before_);
        }
        if (drop && !after) return {0, {}, "injected drop before send"};
        auto res = inner_->post_reading(json_body);
        if (drop) return {0, {}, "injected drop after send"};
        return res;
    }

    std::uint64_t dropped_before() const
    {
        std::lock_guard lock(mu_);
        return dropped_before_;
    }
    std::uint64_t dropped_after() const
    {
        std::lock_guard lock(mu_);
        return dropped_after_;
    }

private:
    std::shared_ptr<Transport> inner_;
    double drop_rate_;
    mutable std::mutex mu_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
    std::uint64_t dropped_before_ = 0;
    std::uint64_t dropped_after_ = 0;
};

}  // namespace thermoscreen::edge
