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

/// @file mesh_sim.hpp
/// @brief Deterministic discrete-event simulation of a shared-medium radio mesh.
///
/// Everything random flows through one seeded generator owned by Network, and
/// events at equal instants fire in insertion order, so a run is a pure
/// function of (scenario, seed).

#include "meshgate/net_model.hpp"

#include <json.hpp>

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <queue>
#include <random>
#include <set>

namespace meshgate::sim {

using NodeId = std::uint16_t;

/// 250 kbit/s: 32 microseconds per byte on air.
inline constexpr Micros kAirtimePerByte{32};

inline Micros airtime(std::size_t frame_bytes) { return kAirtimePerByte * static_cast<long>(frame_bytes); }

class EventQueue {
public:
    using Callback = std::function<void()>;

    /// Throws std::logic_error when `at` lies in the past.
    void schedule(SimTime at, Callback fn) {
        if (at < now_) throw std::logic_error("event scheduled in the past");
        heap_.push(Item{at, next_seq_++, std::move(fn)});
    }

    void schedule_in(Micros delay, Callback fn) { schedule(now_ + delay, std::move(fn)); }

    /// Fires every event with time <= t in (time, insertion) order, then sets now = t.
    void run_until(SimTime t) {
        while (!heap_.empty() && heap_.top().at <= t) fire_next();
        if (t > now_) now_ = t;
    }

    /// Fires events until `done()` holds or time would pass `limit`. Returns done().
    template <typename Pred>
    bool run_while_not(Pred&& done, SimTime limit) {
        while (!done()) {
            if (heap_.empty() || heap_.top().at > limit) {
                if (limit > now_) now_ = limit;
                return done();
            }
            fire_next();
        }
        return true;
    }

    SimTime now() const { return now_; }
    bool empty() const { return heap_.empty(); }
    std::size_t pending() const { return heap_.size(); }
    std::size_t fired() const { return fired_; }

private:
    struct Item {
        SimTime at;
        std::uint64_t seq;
        Callback fn;
    };
    struct Later {
        bool operator()(const Item& a, const Item& b) const {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };

    void fire_next() {
        // Copy out before popping: the callback may schedule more events.
        Item item = heap_.top();
        heap_.pop();
        now_ = item.at;
        ++fired_;
        item.fn();
    }

    std::priority_queue<Item, std::vector<Item>, Later> heap_;
    SimTime now_{};
    std::uint64_t next_seq_ = 0;
    std::size_t fired_ = 0;
};

/// Line-delimited JSON trace. Keys keep insertion order so output is byte-stable.
class Trace {
public:
    using Record = nlohmann::ordered_json;

    explicit Trace(bool enabled = true) : enabled_(enabled) {}

    bool enabled() const { return enabled_; }

    void record(SimTime at, std::string_view kind, Record fields = Record::object()) {
        if (!enabled_) return;
        Record r;
        r["t_us"] = at.count();
        r["ev"] = kind;
        for (auto& [k, v] : fields.items()) r[k] = v;
        lines_.push_back(r.dump());
    }

    const std::vector<std::string>& lines() const { return lines_; }

    void write(std::ostream& os) const {
        for (const auto& l : lines_) os << l << '\n';
    }

private:
    bool enabled_;
    std::vector<std::string> lines_;
};

struct LinkParams {
    Micros base_latency{2000};
    double loss_prob = 0.0;
};

class Topology {
public:
    void add_node(NodeId n) { adj_[n]; }

    void add_link(NodeId a, NodeId b, LinkParams p) {
        if (a == b) throw Error(Errc::config_error, "self link");
        if (p.base_latency <= Micros::zero()) throw Error(Errc::config_error, "base_latency must be > 0");
        if (!(p.loss_prob >= 0.0 && p.loss_prob <= 1.0)) throw Error(Errc::config_error, "loss_prob outside [0,1]");
        links_[key(a, b)] = p;
        adj_[a].insert(b);
        adj_[b].insert(a);
    }

    void remove_link(NodeId a, NodeId b) {
        links_.erase(key(a, b));
        adj_[a].erase(b);
        adj_[b].erase(a);
    }

    const LinkParams* link(NodeId a, NodeId b) const {
        auto it = links_.find(key(a, b));
        return it == links_.end() ? nullptr : &it->second;
    }

    LinkParams* mutable_link(NodeId a, NodeId b) {
        auto it = links_.find(key(a, b));
        return it == links_.end() ? nullptr : &it->second;
    }

    const std::set<NodeId>& neighbors(NodeId n) const {
        static const std::set<NodeId> none;
        auto it = adj_.find(n);
        return it == adj_.end() ? none : it->second;
    }

    std::vector<NodeId> nodes() const {
        std::vector<NodeId> out;
        for (const auto& [n, _] : adj_) out.push_back(n);
        return out;
    }

    const std::map<NodeId, std::set<NodeId>>& adjacency() const { return adj_; }

private:
    static std::pair<NodeId, NodeId> key(NodeId a, NodeId b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }

    std::map<std::pair<NodeId, NodeId>, LinkParams> links_;
    std::map<NodeId, std::set<NodeId>> adj_;
};

/// Shared-medium contention: each node tracks until when it hears the medium
/// busy. A transmission starts once the sender and all of its neighbors are
/// quiet (so two senders sharing a receiver never overlap) and then keeps the
/// sender and every neighbor busy for its airtime (FIFO deferral).
class Channel {
public:
    struct Delivery {
        NodeId to;
        SimTime at;
    };
    struct Result {
        SimTime start{};
        SimTime end{};
        std::vector<Delivery> deliveries;
        std::size_t drops = 0;
    };

    explicit Channel(const Topology& topo) : topo_(&topo) {}

    /// Unicast when `to` is a node id, broadcast when it is kBroadcastShort.
    /// `draw` returns uniform [0,1) values; a receiver is lost when draw() < loss_prob.
    template <typename Draw>
    Result transmit(NodeId from, NodeId to, std::size_t frame_bytes, SimTime now, Draw&& draw) {
        std::vector<std::pair<NodeId, const LinkParams*>> receivers;
        if (to == kBroadcastShort) {
            for (NodeId n : topo_->neighbors(from)) receivers.emplace_back(n, topo_->link(from, n));
        } else {
            const LinkParams* lp = topo_->link(from, to);
            if (lp == nullptr) throw Error(Errc::no_such_link, std::to_string(from) + "->" + std::to_string(to));
            receivers.emplace_back(to, lp);
        }

        Result r;
        r.start = std::max(now, busy_until_[from]);
        for (NodeId n : topo_->neighbors(from)) r.start = std::max(r.start, busy_until_[n]);
        r.end = r.start + airtime(frame_bytes);
        total_wait_ += r.start - now;
        ++transmissions_;
        busy_until_[from] = std::max(busy_until_[from], r.end);
        for (NodeId n : topo_->neighbors(from)) busy_until_[n] = std::max(busy_until_[n], r.end);

        for (auto [n, lp] : receivers) {
            if (draw() < lp->loss_prob) {
                ++r.drops;
            } else {
                r.deliveries.push_back({n, r.end + lp->base_latency});
            }
        }
        delivered_ += r.deliveries.size();
        dropped_ += r.drops;
        return r;
    }

    SimTime busy_until(NodeId n) const {
        auto it = busy_until_.find(n);
        return it == busy_until_.end() ? SimTime{} : it->second;
    }

    std::size_t transmissions() const { return transmissions_; }
    std::size_t delivered() const { return delivered_; }
    std::size_t dropped() const { return dropped_; }
    Micros total_wait() const { return total_wait_; }
    Micros mean_wait() const {
        return transmissions_ == 0 ? Micros::zero() : total_wait_ / static_cast<long>(transmissions_);
    }

private:
    const Topology* topo_;
    std::map<NodeId, SimTime> busy_until_;
    Micros total_wait_{};
    std::size_t transmissions_ = 0;
    std::size_t delivered_ = 0;
    std::size_t dropped_ = 0;
};

/// Receives frames and transmit failures for one node.
class FrameHandler {
public:
    virtual ~FrameHandler() = default;
    virtual void on_frame(const LinkFrame& frame) = 0;
    /// The unicast link to `frame.dst_short` no longer exists.
    virtual void on_link_failure(const LinkFrame& frame) = 0;
};

enum class Priority { control, data };

/// Radio network: topology, channel, per-node transmit queues and frame delivery.
/// Control frames leave a node's queue ahead of data frames.
class Network {
public:
    Network(EventQueue& events, std::uint64_t seed, Trace* trace = nullptr)
        : events_(&events), rng_(seed), channel_(topology_), trace_(trace) {}

    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    Topology& topology() { return topology_; }
    const Channel& channel() const { return channel_; }
    EventQueue& events() { return *events_; }

    void attach(NodeId n, FrameHandler* handler) {
        topology_.add_node(n);
        nodes_[n].handler = handler;
    }

    /// Uniform [0,1) draw from the network's single generator.
    double draw() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    std::mt19937_64& rng() { return rng_; }

    void enqueue(NodeId from, LinkFrame frame, Priority prio) {
        auto& node = nodes_.at(from);
        frame.src_short = from;
        frame.seq = node.next_seq++;
        (prio == Priority::control ? node.control : node.data).push_back(std::move(frame));
        kick(from);
    }

    std::size_t queued(NodeId n) const {
        auto it = nodes_.find(n);
        return it == nodes_.end() ? 0 : it->second.control.size() + it->second.data.size();
    }

    std::size_t frames_sent() const { return frames_sent_; }
    std::size_t frames_delivered() const { return frames_delivered_; }
    std::size_t frames_dropped() const { return frames_dropped_; }
    std::size_t link_failures() const { return link_failures_; }

private:
    struct Node {
        FrameHandler* handler = nullptr;
        std::deque<LinkFrame> control;
        std::deque<LinkFrame> data;
        bool transmitting = false;
        std::uint8_t next_seq = 0;
    };

    void kick(NodeId n) {
        auto& node = nodes_.at(n);
        while (!node.transmitting && (!node.control.empty() || !node.data.empty())) {
            auto& q = node.control.empty() ? node.data : node.control;
            LinkFrame frame = std::move(q.front());
            q.pop_front();
            const Bytes encoded = encode_link_frame(frame);
            const SimTime now = events_->now();
            Channel::Result r;
            try {
                r = channel_.transmit(n, frame.dst_short, encoded.size(), now, [this] { return draw(); });
            } catch (const Error& e) {
                if (e.code() != Errc::no_such_link) throw;
                ++link_failures_;
                if (trace_) trace_->record(now, "link_fail", {{"node", n}, {"to", frame.dst_short}});
                // Defer the callback so handlers never re-enter kick().
                events_->schedule(now, [this, n, frame] {
                    if (auto* h = nodes_.at(n).handler) h->on_link_failure(frame);
                });
                continue;
            }
            ++frames_sent_;
            frames_dropped_ += r.drops;
            if (trace_) {
                trace_->record(now, "tx", {{"node", n}, {"to", frame.dst_short}, {"seq", frame.seq},
                                           {"type", static_cast<int>(frame.frame_type)}, {"bytes", encoded.size()},
                                           {"start_us", r.start.count()}, {"drops", r.drops}});
            }
            node.transmitting = true;
            events_->schedule(r.end, [this, n] {
                nodes_.at(n).transmitting = false;
                kick(n);
            });
            for (const auto& d : r.deliveries) {
                events_->schedule(d.at, [this, d, frame] {
                    ++frames_delivered_;
                    if (trace_) trace_->record(d.at, "rx", {{"node", d.to}, {"from", frame.src_short}, {"seq", frame.seq}});
                    auto it = nodes_.find(d.to);
                    if (it != nodes_.end() && it->second.handler) it->second.handler->on_frame(frame);
                });
            }
        }
    }

    EventQueue* events_;
    std::mt19937_64 rng_;
    Topology topology_;
    Channel channel_;
    Trace* trace_;
    std::map<NodeId, Node> nodes_;
    std::size_t frames_sent_ = 0;
    std::size_t frames_delivered_ = 0;
    std::size_t frames_dropped_ = 0;
    std::size_t link_failures_ = 0;
};

/// One-shot re-armable wakeup bound to an EventQueue. Only the most recent
/// arm() fires; earlier schedules are ignored when they come due.
class Timer {
public:
    Timer(EventQueue& events, std::function<void()> fn) : events_(&events), fn_(std::move(fn)) {}
    Timer(const Timer&) = delete;
    Timer& operator=(const Timer&) = delete;
    ~Timer() { *alive_ = false; }

    /// Arms for `at` unless an earlier wakeup is already pending.
    void arm(SimTime at) {
        if (armed_ && *armed_ <= at) return;
        armed_ = at;
        const auto gen = ++generation_;
        events_->schedule(std::max(at, events_->now()), [this, gen, alive = alive_] {
            if (!*alive || gen != generation_) return;
            armed_.reset();
            fn_();
        });
    }

    void cancel() {
        armed_.reset();
        ++generation_;
    }

private:
    EventQueue* events_;
    std::function<void()> fn_;
    std::optional<SimTime> armed_;
    std::uint64_t generation_ = 0;
    std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

}  // namespace meshgate::sim
