#pragma once

// HTTP + WebSocket front end for CloudService on Boost.Beast. Every
// connection lives on its own strand; ingest handlers run concurrently on the
// io threads and serialize inside the store.

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "thermoscreen/cloud/service.hpp"

namespace thermoscreen::cloud {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct ServerConfig {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;  // 0 picks a free port
    int threads = 2;
    std::size_t max_ws_queue = 256;  // frames buffered per console before it is dropped
    // Pings go out after half of this much silence; a console silent for the
    // full period is disconnected.
    std::chrono::seconds ws_idle_timeout{30};
    int ws_send_buffer = 0;  // SO_SNDBUF for console sockets, 0 keeps the default
    std::size_t max_body_bytes = 64 * 1024;
};

struct ServerStats {
    std::atomic<std::uint64_t> http_requests{0};
    std::atomic<std::uint64_t> ws_sessions{0};
    std::atomic<std::uint64_t> slow_consumer_disconnects{0};
    std::atomic<std::uint64_t> bad_frames{0};
};

namespace detail {

class WsSession final : public Subscriber, public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket&& socket, CloudService& svc, const ServerConfig& cfg, ServerStats& stats)
        : ws_(std::move(socket)), svc_(svc), cfg_(cfg), stats_(stats)
    {}

    void run(http::request<http::string_body> req)
    {
        if (cfg_.ws_send_buffer > 0) {
            boost::system::error_code ec;
            beast::get_lowest_layer(ws_).socket().set_option(net::socket_base::send_buffer_size(cfg_.ws_send_buffer),
                                                             ec);
        }
        beast::get_lowest_layer(ws_).expires_never();
        websocket::stream_base::timeout opt{};
        opt.handshake_timeout = std::chrono::seconds(30);
        opt.idle_timeout = cfg_.ws_idle_timeout;
        opt.keep_alive_pings = true;
        ws_.set_option(opt);
        ws_.text(true);
        ++stats_.ws_sessions;
        ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

    bool offer(const Frame& frame, bool backlog) override
    {
        if (closed_) return false;
        net::post(ws_.get_executor(), [self = shared_from_this(), frame, backlog] { self->enqueue(frame, backlog); });
        return true;
    }

private:
    void on_accept(beast::error_code ec)
    {
        if (ec) return fail();
        do_read();
    }

    void do_read() { ws_.async_read(buf_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

    void on_read(beast::error_code ec, std::size_t)
    {
        if (ec) return fail();
        const auto text = beast::buffers_to_string(buf_.data());
        buf_.consume(buf_.size());
        try {
            const auto msg = parse_client_frame(text);
            if (msg.subscribe) {
                console_id_ = msg.subscribe->console_id;
                svc_.subscribe(shared_from_this());
            } else if (msg.ack) {
                svc_.ack(msg.ack->id, msg.ack->console_id);
            }
        } catch (const Error&) {
            ++stats_.bad_frames;
        }
        do_read();
    }

    void enqueue(const Frame& frame, bool backlog)
    {
        if (closed_) return;
        if (backlog) ++backlog_left_;
        else if (queue_.size() >= cfg_.max_ws_queue + backlog_left_) {
            ++stats_.slow_consumer_disconnects;
            fail();
            return;
        }
        queue_.push_back(frame);
        if (queue_.size() == 1) do_write();
    }

    void do_write()
    {
        ws_.async_write(net::buffer(*queue_.front()),
                        beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t)
    {
        if (ec) return fail();
        queue_.pop_front();
        if (backlog_left_ > 0) --backlog_left_;
        if (!queue_.empty()) do_write();
    }

    // A failed or slow connection is cut at the socket; pending operations
    // complete with errors and release the session.
    void fail()
    {
        if (closed_.exchange(true)) return;
        queue_.clear();
        boost::system::error_code ignored;
        beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ignored);
        beast::get_lowest_layer(ws_).socket().close(ignored);
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buf_;
    CloudService& svc_;
    const ServerConfig& cfg_;
    ServerStats& stats_;
    std::deque<Frame> queue_;
    std::size_t backlog_left_ = 0;
    std::atomic<bool> closed_{false};
    std::string console_id_;
};

class HttpSession final : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket&& socket, CloudService& svc, const ServerConfig& cfg, ServerStats& stats)
        : stream_(std::move(socket)), svc_(svc), cfg_(cfg), stats_(stats)
    {}

    void run()
    {
        net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
    }

private:
    void do_read()
    {
        parser_.emplace();
        parser_->body_limit(cfg_.max_body_bytes);
        stream_.expires_after(std::chrono::seconds(60));
        http::async_read(stream_, buf_, *parser_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t)
    {
        if (ec == http::error::end_of_stream) return close();
        if (ec == http::error::body_limit) return reply(413, errors_body({"body too large"}).dump(), false);
        if (ec) return;
        auto req = parser_->release();
        if (websocket::is_upgrade(req)) {
            if (req.target() != "/ws/alerts") return reply(404, errors_body({"not found"}).dump(), false);
            std::make_shared<WsSession>(stream_.release_socket(), svc_, cfg_, stats_)->run(std::move(req));
            return;
        }
        ++stats_.http_requests;
        HttpResult res;
        try {
            res = svc_.handle(std::string_view(req.method_string().data(), req.method_string().size()),
                              std::string_view(req.target().data(), req.target().size()), req.body());
        } catch (const std::exception& e) {
            res = {500, errors_body({e.what()}).dump()};
        }
        reply(res.status, std::move(res.body), req.keep_alive());
    }

    void reply(int status, std::string body, bool keep_alive)
    {
        auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(status), 11);
        res->set(http::field::content_type, "application/json");
        res->keep_alive(keep_alive);
        res->body() = std::move(body);
        res->prepare_payload();
        http::async_write(stream_, *res,
                          [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                              if (ec) return;
                              if (!res->keep_alive()) return self->close();
                              self->do_read();
                          });
    }

    void close()
    {
        beast::error_code ignored;
        stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buf_;
    std::optional<http::request_parser<http::string_body>> parser_;
    CloudService& svc_;
    const ServerConfig& cfg_;
    ServerStats& stats_;
};

}  // namespace detail

class CloudServer {
public:
    CloudServer(ServerConfig cfg, StoreConfig store)
        : cfg_(std::move(cfg)), svc_(std::move(store)), acceptor_(ioc_)
    {}

    CloudServer(const CloudServer&) = delete;
    CloudServer& operator=(const CloudServer&) = delete;

    ~CloudServer() { stop(); }

    void start()
    {
        const tcp::endpoint ep{net::ip::make_address(cfg_.address), cfg_.port};
        acceptor_.open(ep.protocol());
        acceptor_.set_option(net::socket_base::reuse_address(true));
        acceptor_.bind(ep);
        acceptor_.listen(net::socket_base::max_listen_connections);
        port_ = acceptor_.local_endpoint().port();
        do_accept();
        for (int i = 0; i < std::max(1, cfg_.threads); ++i) threads_.emplace_back([this] { ioc_.run(); });
    }

    // Stops accepting, drops every connection and joins the io threads.
    void stop()
    {
        if (stopped_.exchange(true)) return;
        svc_.hub().stop();
        ioc_.stop();
        for (auto& t : threads_) t.join();
        threads_.clear();
    }

    unsigned short port() const { return port_; }
    std::string url() const { return "http://" + cfg_.address + ":" + std::to_string(port_); }
    CloudService& service() { return svc_; }
    const ServerStats& stats() const { return stats_; }

private:
    void do_accept()
    {
        acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
            if (!acceptor_.is_open()) return;
            if (!ec) {
                socket.set_option(tcp::no_delay(true), ec);
                std::make_shared<detail::HttpSession>(std::move(socket), svc_, cfg_, stats_)->run();
            }
            do_accept();
        });
    }

    ServerConfig cfg_;
    ServerStats stats_;
    CloudService svc_;  // outlives the io context so late session teardown is safe
    net::io_context ioc_;
    tcp::acceptor acceptor_;
    std::vector<std::thread> threads_;
    unsigned short port_ = 0;
    std::atomic<bool> stopped_{false};
};

}  // namespace thermoscreen::cloud
