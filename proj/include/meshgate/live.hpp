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

/// @file live.hpp
/// @brief The `serve` runtime: the simulated mesh and gateway paced against
/// the wall clock on one thread, with the middleware and its HTTP API beside it.
///
/// The World is owned by the sim thread. Other threads reach it only through
/// the command queue and the published status snapshot.

#include "meshgate/middleware_http.hpp"
#include "meshgate/scenario.hpp"

#include <condition_variable>
#include <future>

namespace meshgate::live {

struct LiveOptions {
    /// Simulated seconds per wall-clock second.
    double speed = 1.0;
    std::chrono::milliseconds rule_period = std::chrono::seconds(1);
    Micros command_timeout = std::chrono::seconds(30);
    std::chrono::milliseconds step = std::chrono::milliseconds(10);
    /// Deliver readings over HTTP to this base URL instead of in-process.
    std::optional<std::string> middleware_url;
};

/// Hands middleware commands to the sim thread and blocks the caller until
/// the ack, the timeout, or shutdown.
class CommandQueue : public middleware::CommandTransport {
public:
    struct Pending {
        Ipv4Address to;
        std::uint8_t appliance = 0;
        std::uint8_t value = 0;
        std::promise<gateway::CommandResult> done;
        bool settled = false;
    };

    gateway::CommandResult send(Ipv4Address virtual4, std::uint8_t appliance, std::uint8_t value) override {
        auto p = std::make_shared<Pending>();
        p->to = virtual4;
        p->appliance = appliance;
        p->value = value;
        auto fut = p->done.get_future();
        {
            std::lock_guard lock(mu_);
            if (closed_) return {};
            queue_.push_back(std::move(p));
        }
        return fut.get();
    }

    std::vector<std::shared_ptr<Pending>> take() {
        std::lock_guard lock(mu_);
        std::vector<std::shared_ptr<Pending>> out(queue_.begin(), queue_.end());
        queue_.clear();
        return out;
    }

    /// Refuses new commands and times out the queued ones.
    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        for (auto& p : queue_) p->done.set_value({});
        queue_.clear();
    }

private:
    std::mutex mu_;
    std::deque<std::shared_ptr<Pending>> queue_;
    bool closed_ = false;
};

class LiveRuntime {
public:
    LiveRuntime(sim::ScenarioConfig sc, middleware::MiddlewareConfig mc, LiveOptions opt)
        : opt_(std::move(opt)),
          mw_(std::move(mc), [this] { return epoch_ms_.load(); }) {
        if (!(opt_.speed > 0.0)) throw Error(Errc::config_error, "speed must be > 0");
        if (sc.mote.epoch_ms == 0) sc.mote.epoch_ms = middleware::Middleware::wall_clock_ms();
        // Unbounded in a live process.
        sc.trace = false;
        if (opt_.middleware_url) {
            link_ = std::make_unique<middleware::HttpLink>(*opt_.middleware_url);
        } else {
            link_ = std::make_unique<middleware::DirectLink>(mw_);
        }
        world_ = std::make_unique<sim::World>(std::move(sc), link_.get());
        publish();
        mw_.set_command_transport(&queue_);
        mw_.set_buffer_status([this] {
            std::lock_guard lock(status_mu_);
            return status_;
        });
    }

    LiveRuntime(const LiveRuntime&) = delete;
    LiveRuntime& operator=(const LiveRuntime&) = delete;
    ~LiveRuntime() { stop(); }

    void start() {
        sim_thread_ = std::thread([this] { sim_loop(); });
        rule_thread_ = std::thread([this] { rule_loop(); });
    }

    /// Stops both threads. Commands still in flight complete as timeouts.
    void stop() {
        {
            std::lock_guard lock(stop_mu_);
            if (stopping_) return;
            stopping_ = true;
        }
        stop_cv_.notify_all();
        queue_.close();
        if (sim_thread_.joinable()) sim_thread_.join();
        // Before joining the rule thread, which may be waiting on one of these.
        for (auto& p : in_flight_) {
            if (!p->settled) p->done.set_value({});
        }
        in_flight_.clear();
        if (rule_thread_.joinable()) rule_thread_.join();
        mw_.close_subscriptions();
    }

    middleware::Middleware& middleware() { return mw_; }
    SimTime sim_now() const { return SimTime(sim_us_.load()); }
    std::uint64_t epoch_ms() const { return epoch_ms_.load(); }

private:
    bool wait_stop(std::chrono::milliseconds d) {
        std::unique_lock lock(stop_mu_);
        return stop_cv_.wait_for(lock, d, [this] { return stopping_; });
    }

    void sim_loop() {
        const auto wall0 = std::chrono::steady_clock::now();
        const SimTime sim0 = world_->now();
        do {
            for (auto& p : queue_.take()) {
                in_flight_.push_back(p);
                world_->client().send(p->to, p->appliance, p->value, opt_.command_timeout,
                                      [p](gateway::CommandResult r) {
                                          p->settled = true;
                                          p->done.set_value(r);
                                      });
            }
            const auto wall = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - wall0);
            world_->run_until(sim0 + Micros(static_cast<long>(wall.count() * opt_.speed)));
            publish();
            std::erase_if(in_flight_, [](const auto& p) { return p->settled; });
        } while (!wait_stop(opt_.step));
    }

    void rule_loop() {
        while (!wait_stop(opt_.rule_period)) mw_.evaluate_rules();
    }

    void publish() {
        sim_us_ = world_->now().count();
        epoch_ms_ = world_->epoch_now_ms();
        auto st = world_->gateway().status();
        st["sim_time_s"] = static_cast<double>(world_->now().count()) / 1e6;
        std::lock_guard lock(status_mu_);
        status_ = std::move(st);
    }

    LiveOptions opt_;
    std::atomic<std::uint64_t> epoch_ms_{0};
    std::atomic<std::int64_t> sim_us_{0};
    middleware::Middleware mw_;
    std::unique_ptr<gateway::MiddlewareLink> link_;
    std::unique_ptr<sim::World> world_;
    CommandQueue queue_;
    // Sim-thread only while running.
    std::vector<std::shared_ptr<CommandQueue::Pending>> in_flight_;

    std::mutex status_mu_;
    middleware::Json status_;

    std::mutex stop_mu_;
    std::condition_variable stop_cv_;
    bool stopping_ = false;
    std::thread sim_thread_;
    std::thread rule_thread_;
};

}  // namespace meshgate::live
