// Copyright 2026 meshgate contributors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/// @file middleware_http.hpp
/// @brief HTTP/JSON binding of the middleware API, and the HTTP delivery
/// link the gateway uses to reach it.

#include "meshgate/middleware.hpp"

#include <httplib.h>

#include <thread>

namespace meshgate::middleware {

class HttpServer {
public:
    explicit HttpServer(Middleware& mw) : mw_(&mw) { routes(); }

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;
    ~HttpServer() { stop(); }

    /// Binds and starts serving on a background thread. Port 0 picks a free
    /// port. Returns the bound port.
    int start(const std::string& host, int port) {
        if (port == 0) {
            port_ = server_.bind_to_any_port(host);
        } else {
            port_ = server_.bind_to_port(host, port) ? port : -1;
        }
        if (port_ < 0) throw Error(Errc::io_error, "cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    void stop() {
        stopping_ = true;
        mw_->close_subscriptions();
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const { return port_; }
    httplib::Server& raw() { return server_; }

private:
    static void reply(httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    }

    static std::optional<std::uint16_t> id16(const std::string& s) {
        if (s.empty() || s.size() > 5) return std::nullopt;
        const auto v = std::stoul(s);
        if (v > 0xFFFF) return std::nullopt;
        return static_cast<std::uint16_t>(v);
    }

    void routes() {
        // Bounds how long stop() waits on idle keep-alive clients.
        server_.set_keep_alive_timeout(1);
        server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                     {"Access-Control-Allow-Headers", "Content-Type"},
                                     {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server_.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) {
            reply(res, mw_->ingest_json(req.body));
        });

        server_.Get("/motes", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(mw_->motes().dump(), "application/json");
        });

        server_.Get(R"(/motes/(\d+)/latest)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto id = id16(req.matches[1]);
            if (!id) return reply(res, {404, {{"error", "unknown mote"}}});
            reply(res, mw_->latest(*id));
        });

        server_.Get(R"(/motes/(\d+)/readings)", [this](const httplib::Request& req, httplib::Response& res) {
            const auto id = id16(req.matches[1]);
            if (!id) return reply(res, {404, {{"error", "unknown mote"}}});
            std::uint64_t window = 60;
            if (req.has_param("window_s")) {
                try {
                    window = std::stoull(req.get_param_value("window_s"));
                } catch (const std::exception&) {
                    return reply(res, {400, {{"error", "window_s must be a non-negative integer"}}});
                }
            }
            reply(res, mw_->readings(*id, window));
        });

        server_.Post(R"(/motes/(\d+)/appliances/(\d+)/command)",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         const auto id = id16(req.matches[1]);
                         const auto aid = id16(req.matches[2]);
                         if (!id || !aid || *aid > 0xFF) return reply(res, {404, {{"error", "unknown appliance"}}});
                         int value = -1;
                         try {
                             const auto j = Json::parse(req.body);
                             if (!j.at("value").is_number_integer()) throw std::invalid_argument("value");
                             value = j.at("value").get<int>();
                         } catch (const std::exception&) {
                             return reply(res, {400, {{"error", "body must be {\"value\": 0|1}"}}});
                         }
                         reply(res, mw_->send_command(*id, static_cast<std::uint8_t>(*aid), value));
                     });

        server_.Get("/buffer/status", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(mw_->buffer_status().dump(), "application/json");
        });

        server_.Get("/events", [this](const httplib::Request&, httplib::Response& res) {
            auto sub = mw_->subscribe();
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider("text/event-stream", [this, sub](std::size_t, httplib::DataSink& sink) {
                if (stopping_) {
                    sink.done();
                    return true;
                }
                std::string chunk;
                if (auto ev = sub->next(std::chrono::seconds(1))) {
                    chunk = "event: reading\ndata: " + ev->dump() + "\n\n";
                } else {
                    chunk = ": keepalive\n\n";
                }
                return sink.write(chunk.data(), chunk.size());
            });
        });
    }

    Middleware* mw_;
    httplib::Server server_;
    std::thread thread_;
    std::atomic<bool> stopping_{false};
    int port_ = -1;
};

/// Gateway-side delivery over HTTP POST /ingest. Any transport failure or 5xx
/// marks the link down; 4xx means the middleware refused the reading for good.
class HttpLink : public gateway::MiddlewareLink {
public:
    explicit HttpLink(const std::string& base_url, std::chrono::milliseconds timeout = std::chrono::seconds(1))
        : client_(base_url) {
        const auto s = static_cast<time_t>(timeout.count() / 1000);
        const auto us = static_cast<time_t>((timeout.count() % 1000) * 1000);
        client_.set_connection_timeout(s, us);
        client_.set_read_timeout(s, us);
        client_.set_write_timeout(s, us);
        client_.set_keep_alive(true);
    }

    gateway::Delivery deliver(const SensorReading& r) override {
        Json body = Middleware::reading_json(r);
        body.erase("watts");
        auto res = client_.Post("/ingest", body.dump(), "application/json");
        if (!res || res->status >= 500) return gateway::Delivery::failed;
        if (res->status == 200) return gateway::Delivery::ok;
        return gateway::Delivery::rejected;
    }

private:
    httplib::Client client_;
};

}  // namespace meshgate::middleware
