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

/// @file tcp_host.hpp
/// @brief Connection table for one simulated host: demux by (remote, ports),
/// passive opens on listening ports, RST for strays, and retransmission timers.

#include "meshgate/mesh_sim.hpp"
#include "meshgate/transport.hpp"

namespace meshgate::sim {

template <typename Addr>
class TcpHost {
public:
    using ConnId = std::uint64_t;
    /// Hands a segment to the network layer, addressed to `remote`.
    using Emit = std::function<void(const Addr& remote, const transport::Segment&)>;
    /// Invoked after every input that touched the connection.
    using Update = std::function<void(ConnId)>;

    TcpHost(EventQueue& events, Emit emit, std::uint64_t seed, transport::Timing timing = {})
        : events_(&events), emit_(std::move(emit)), rng_(seed), timing_(timing), timer_(events, [this] { tick(); }) {}

    TcpHost(const TcpHost&) = delete;
    TcpHost& operator=(const TcpHost&) = delete;

    void listen(std::uint16_t port, Update on_update) { listeners_[port] = std::move(on_update); }

    ConnId connect(const Addr& remote, std::uint16_t remote_port, std::uint16_t local_port, Update on_update) {
        const Key key{remote, remote_port, local_port};
        if (index_.count(key)) throw Error(Errc::config_error, "connection key in use");
        const ConnId id = next_id_++;
        auto& e = conns_.emplace(id, Entry{key, transport::Connection::client(local_port, remote_port,
                                                                              static_cast<std::uint32_t>(rng_()), timing_),
                                           std::move(on_update)})
                      .first->second;
        index_[key] = id;
        flush(key.remote, e.conn.open(now()));
        rearm();
        return id;
    }

    transport::Connection* find(ConnId id) {
        auto it = conns_.find(id);
        return it == conns_.end() ? nullptr : &it->second.conn;
    }

    const Addr* remote_of(ConnId id) const {
        auto it = conns_.find(id);
        return it == conns_.end() ? nullptr : &it->second.key.remote;
    }

    void send(ConnId id, ByteView data) {
        auto& e = conns_.at(id);
        e.conn.send(data);
        flush(e.key.remote, e.conn.poll(now()));
        rearm();
    }

    void close(ConnId id) {
        auto& e = conns_.at(id);
        flush(e.key.remote, e.conn.close(now()));
        rearm();
    }

    void erase(ConnId id) {
        auto it = conns_.find(id);
        if (it == conns_.end()) return;
        index_.erase(it->second.key);
        conns_.erase(it);
    }

    /// Feeds one checksum-verified segment from `remote`.
    void on_segment(const Addr& remote, const transport::Segment& s) {
        const Key key{remote, s.src_port, s.dst_port};
        auto it = index_.find(key);
        if (it != index_.end()) {
            const ConnId id = it->second;
            auto& e = conns_.at(id);
            flush(remote, e.conn.on_segment(s, now()));
            notify(id);
        } else if (s.has(transport::kSyn) && !s.has(transport::kAck) && listeners_.count(s.dst_port)) {
            transport::Connection::Out out;
            auto conn = transport::Connection::accept(s, static_cast<std::uint32_t>(rng_()), now(), out, timing_);
            const ConnId id = next_id_++;
            conns_.emplace(id, Entry{key, std::move(conn), listeners_.at(s.dst_port)});
            index_[key] = id;
            flush(remote, out);
            notify(id);
        } else if (!s.has(transport::kRst)) {
            ++resets_sent_;
            emit_(remote, transport::make_reset(s));
        }
        rearm();
    }

    std::size_t connections() const { return conns_.size(); }
    std::size_t resets_sent() const { return resets_sent_; }

private:
    struct Key {
        Addr remote;
        std::uint16_t remote_port;
        std::uint16_t local_port;
        auto operator<=>(const Key&) const = default;
    };
    struct Entry {
        Key key;
        transport::Connection conn;
        Update on_update;
    };

    SimTime now() const { return events_->now(); }

    void flush(const Addr& remote, const transport::Connection::Out& out) {
        for (const auto& s : out) emit_(remote, s);
    }

    void notify(ConnId id) {
        auto it = conns_.find(id);
        if (it == conns_.end()) return;
        auto cb = it->second.on_update;
        if (cb) cb(id);
    }

    void tick() {
        std::vector<ConnId> ids;
        for (const auto& [id, e] : conns_) ids.push_back(id);
        for (ConnId id : ids) {
            auto it = conns_.find(id);
            if (it == conns_.end()) continue;
            auto dl = it->second.conn.next_deadline();
            if (!dl || *dl > now()) continue;
            const auto before = it->second.conn.state();
            flush(it->second.key.remote, it->second.conn.on_timer(now()));
            if (it->second.conn.state() != before) notify(id);
        }
        rearm();
    }

    void rearm() {
        std::optional<SimTime> best;
        for (const auto& [_, e] : conns_) {
            auto d = e.conn.next_deadline();
            if (d && (!best || *d < *best)) best = d;
        }
        if (best) timer_.arm(*best);
    }

    EventQueue* events_;
    Emit emit_;
    std::mt19937 rng_;
    transport::Timing timing_;
    Timer timer_;
    std::map<std::uint16_t, Update> listeners_;
    std::map<ConnId, Entry> conns_;
    std::map<Key, ConnId> index_;
    ConnId next_id_ = 1;
    std::size_t resets_sent_ = 0;
};

}  // namespace meshgate::sim
