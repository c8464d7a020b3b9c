#pragma once

// Minimal console-side WebSocket client used by tests and the fleet driver.
// One io thread runs all socket operations; received text frames are handed
// over through a queue.

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "thermoscreen/error.hpp"

namespace thermoscreen::cloud {

class WsClient {
public:
    struct Options {
        bool read = true;     // false leaves frames unread in the socket (a stalled console)
        int receive_buffer = 0;  // SO_RCVBUF, 0 keeps the default
    };

    WsClient(const std::string& host, unsigned short port) : WsClient(host, port, Options{}) {}

    WsClient(const std::string& host, unsigned short port, Options opt) : ws_(ioc_)
    {
        namespace net = boost::asio;
        using tcp = net::ip::tcp;
        try {
            auto& sock = boost::beast::get_lowest_layer(ws_);
            sock.socket().open(tcp::v4());
            if (opt.receive_buffer > 0)
                sock.socket().set_option(net::socket_base::receive_buffer_size(opt.receive_buffer));
            tcp::resolver resolver(ioc_);
            const auto eps = resolver.resolve(host, std::to_string(port));
            sock.expires_after(std::chrono::seconds(5));
            sock.connect(*eps.begin());
            sock.expires_never();
            ws_.handshake(host + ":" + std::to_string(port), "/ws/alerts");
        } catch (const boost::system::system_error& e) {
            throw CloudUnreachable(std::string("websocket connect: ") + e.what());
        }
        ws_.text(true);
        if (opt.read) do_read();
        work_.emplace(ioc_.get_executor());
        thread_ = std::thread([this] { ioc_.run(); });
    }

    WsClient(const WsClient&) = delete;
    WsClient& operator=(const WsClient&) = delete;

    ~WsClient() { close(); }

    void send(std::string text)
    {
        boost::asio::post(ioc_, [this, t = std::make_shared<std::string>(std::move(text))] {
            out_.push_back(t);
            if (out_.size() == 1) do_write();
        });
    }

    // Next received frame, or nullopt after `timeout` or once the connection is gone.
    std::optional<std::string> next(std::chrono::milliseconds timeout)
    {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, timeout, [&] { return !inbox_.empty() || closed_; });
        if (inbox_.empty()) return std::nullopt;
        auto s = std::move(inbox_.front());
        inbox_.pop_front();
        return s;
    }

    bool closed() const
    {
        std::lock_guard lock(mu_);
        return closed_;
    }

    // Waits for the server to drop the connection.
    bool wait_closed(std::chrono::milliseconds timeout)
    {
        std::unique_lock lock(mu_);
        return cv_.wait_for(lock, timeout, [&] { return closed_; });
    }

    void close()
    {
        if (!thread_.joinable()) return;
        boost::asio::post(ioc_, [this] {
            boost::system::error_code ec;
            boost::beast::get_lowest_layer(ws_).socket().shutdown(boost::asio::ip::tcp::socket::shutdown_both, ec);
            boost::beast::get_lowest_layer(ws_).socket().close(ec);
            work_.reset();
        });
        thread_.join();
    }

private:
    void do_read()
    {
        ws_.async_read(buf_, [this](boost::beast::error_code ec, std::size_t) {
            std::lock_guard lock(mu_);
            if (ec) {
                closed_ = true;
                cv_.notify_all();
                return;
            }
            inbox_.push_back(boost::beast::buffers_to_string(buf_.data()));
            buf_.consume(buf_.size());
            cv_.notify_all();
            do_read();
        });
    }

    void do_write()
    {
        ws_.async_write(boost::asio::buffer(*out_.front()), [this](boost::beast::error_code ec, std::size_t) {
            if (ec) {
                out_.clear();
                return;
            }
            out_.pop_front();
            if (!out_.empty()) do_write();
        });
    }

    boost::asio::io_context ioc_;
    boost::beast::websocket::stream<boost::beast::tcp_stream> ws_;
    std::optional<boost::asio::executor_work_guard<boost::asio::io_context::executor_type>> work_;
    boost::beast::flat_buffer buf_;
    std::deque<std::shared_ptr<std::string>> out_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::string> inbox_;
    bool closed_ = false;
    std::thread thread_;
};

}  // namespace thermoscreen::cloud
