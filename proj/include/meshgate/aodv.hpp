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

/// @file aodv.hpp
/// @brief On-demand distance-vector routing over 16-bit link addresses.
///
/// Router is sans-IO: it consumes control bytes, timer ticks and link-break
/// notices and returns the control messages to transmit plus which
/// destinations became reachable or unreachable. Packet buffering while a
/// discovery runs is left to the caller.
///
/// Control layouts (big-endian):
///
///   RREQ  0x01 flags hop ttl | rreq_id u32 | dest u16 | dest_seq u32 | orig u16 | orig_seq u32   (20 bytes)
///         flags bit0 = destination sequence unknown
///   RREP  0x02 hop | dest u16 | dest_seq u32 | orig u16 | lifetime_ms u32                        (14 bytes)
///   RERR  0x03 count | count x (dest u16, dest_seq u32)

#include "meshgate/common.hpp"

#include <map>
#include <optional>
#include <set>
#include <variant>

namespace meshgate::aodv {

using NodeId = std::uint16_t;

inline constexpr NodeId kBroadcast = 0xFFFF;

struct Config {
    Micros active_route_lifetime = std::chrono::seconds(30);
    Micros rreq_record_lifetime = std::chrono::seconds(3);
    Micros discovery_timeout = std::chrono::seconds(1);
    int rreq_retries = 3;
    std::uint8_t hop_limit = 16;
};

struct Rreq {
    bool unknown_seq = false;
    std::uint8_t hop_count = 0;
    std::uint8_t ttl = 0;
    std::uint32_t rreq_id = 0;
    NodeId dest = 0;
    std::uint32_t dest_seq = 0;
    NodeId orig = 0;
    std::uint32_t orig_seq = 0;
    bool operator==(const Rreq&) const = default;
};

struct Rrep {
    std::uint8_t hop_count = 0;
    NodeId dest = 0;
    std::uint32_t dest_seq = 0;
    NodeId orig = 0;
    std::uint32_t lifetime_ms = 0;
    bool operator==(const Rrep&) const = default;
};

struct Rerr {
    std::vector<std::pair<NodeId, std::uint32_t>> unreachable;
    bool operator==(const Rerr&) const = default;
};

using Control = std::variant<Rreq, Rrep, Rerr>;

inline Bytes encode(const Control& c) {
    Bytes out;
    if (const auto* q = std::get_if<Rreq>(&c)) {
        put_u8(out, 0x01);
        put_u8(out, q->unknown_seq ? 1 : 0);
        put_u8(out, q->hop_count);
        put_u8(out, q->ttl);
        put_u32(out, q->rreq_id);
        put_u16(out, q->dest);
        put_u32(out, q->dest_seq);
        put_u16(out, q->orig);
        put_u32(out, q->orig_seq);
    } else if (const auto* p = std::get_if<Rrep>(&c)) {
        put_u8(out, 0x02);
        put_u8(out, p->hop_count);
        put_u16(out, p->dest);
        put_u32(out, p->dest_seq);
        put_u16(out, p->orig);
        put_u32(out, p->lifetime_ms);
    } else {
        const auto& e = std::get<Rerr>(c);
        if (e.unreachable.size() > 255) throw Error(Errc::oversized, "RERR list");
        put_u8(out, 0x03);
        put_u8(out, static_cast<std::uint8_t>(e.unreachable.size()));
        for (auto [d, s] : e.unreachable) {
            put_u16(out, d);
            put_u32(out, s);
        }
    }
    return out;
}

/// Throws Truncated / LengthMismatch / MalformedDispatch.
inline Control decode(ByteView b) {
    Reader r(b);
    const auto type = r.u8();
    Control out;
    if (type == 0x01) {
        Rreq q;
        q.unknown_seq = (r.u8() & 1) != 0;
        q.hop_count = r.u8();
        q.ttl = r.u8();
        q.rreq_id = r.u32();
        q.dest = r.u16();
        q.dest_seq = r.u32();
        q.orig = r.u16();
        q.orig_seq = r.u32();
        out = q;
    } else if (type == 0x02) {
        Rrep p;
        p.hop_count = r.u8();
        p.dest = r.u16();
        p.dest_seq = r.u32();
        p.orig = r.u16();
        p.lifetime_ms = r.u32();
        out = p;
    } else if (type == 0x03) {
        Rerr e;
        const auto n = r.u8();
        for (int i = 0; i < n; ++i) {
            const auto d = r.u16();
            e.unreachable.emplace_back(d, r.u32());
        }
        out = e;
    } else {
        throw Error(Errc::malformed_dispatch, "aodv type " + std::to_string(type));
    }
    if (r.remaining() != 0) throw Error(Errc::length_mismatch, "aodv trailing bytes");
    return out;
}

/// Sequence-number comparison with wraparound.
inline bool seq_newer(std::uint32_t a, std::uint32_t b) { return static_cast<std::int32_t>(a - b) > 0; }

struct RouteEntry {
    NodeId dest = 0;
    NodeId next_hop = 0;
    std::uint8_t hop_count = 0;
    std::uint32_t dest_seq = 0;
    bool valid_seq = false;
    bool valid = false;
    SimTime expires{};
    std::set<NodeId> precursors;

    bool live(SimTime now) const { return valid && expires > now; }
};

class Router {
public:
    struct Send {
        NodeId to;  // kBroadcast or a neighbor
        Bytes msg;
    };
    struct Output {
        std::vector<Send> control;
        std::vector<NodeId> reachable;    // discovery finished; flush buffered packets
        std::vector<NodeId> unreachable;  // discovery gave up; drop buffered packets
    };

    Router(NodeId self, Config cfg = {}) : self_(self), cfg_(cfg) {}

    NodeId self() const { return self_; }
    std::uint32_t own_seq() const { return own_seq_; }
    const std::map<NodeId, RouteEntry>& table() const { return table_; }
    const Config& config() const { return cfg_; }

    /// Live next hop toward `dest`, refreshing its lifetime.
    std::optional<NodeId> next_hop(NodeId dest, SimTime now) {
        auto it = table_.find(dest);
        if (it == table_.end() || !it->second.live(now)) return std::nullopt;
        it->second.expires = std::max(it->second.expires, now + cfg_.active_route_lifetime);
        return it->second.next_hop;
    }

    /// Returns the next hop, or starts (or continues) discovery and returns nullopt.
    std::optional<NodeId> resolve(NodeId dest, SimTime now, Output& out) {
        if (dest == self_) throw std::logic_error("resolve to self");
        if (auto nh = next_hop(dest, now)) return nh;
        if (!discoveries_.count(dest)) {
            discoveries_[dest] = Discovery{};
            send_rreq(dest, now, out);
        }
        return std::nullopt;
    }

    bool discovering(NodeId dest) const { return discoveries_.count(dest) != 0; }

    /// Records that a data packet from `prev_hop` was forwarded toward `dest`.
    void note_forward(NodeId dest, NodeId prev_hop, SimTime now) {
        auto it = table_.find(dest);
        if (it == table_.end() || !it->second.live(now)) return;
        if (prev_hop != self_) it->second.precursors.insert(prev_hop);
        it->second.expires = std::max(it->second.expires, now + cfg_.active_route_lifetime);
        auto back = table_.find(prev_hop);
        if (back != table_.end() && back->second.live(now)) {
            back->second.expires = std::max(back->second.expires, now + cfg_.active_route_lifetime);
        }
    }

    void on_control(ByteView msg, NodeId from, SimTime now, Output& out) {
        Control c;
        try {
            c = decode(msg);
        } catch (const Error&) {
            ++malformed_;
            return;
        }
        if (auto* q = std::get_if<Rreq>(&c)) {
            on_rreq(*q, from, now, out);
        } else if (auto* p = std::get_if<Rrep>(&c)) {
            on_rrep(*p, from, now, out);
        } else {
            on_rerr(std::get<Rerr>(c), from, now, out);
        }
    }

    /// The link to `hop` is gone: invalidate every route through it and report upstream.
    void on_link_break(NodeId hop, SimTime now, Output& out) {
        Rerr rerr;
        bool notify = false;
        for (auto& [d, e] : table_) {
            if (!e.valid || e.next_hop != hop) continue;
            e.valid = false;
            ++e.dest_seq;
            rerr.unreachable.emplace_back(d, e.dest_seq);
            notify = notify || !e.precursors.empty();
            e.precursors.clear();
        }
        (void)now;
        if (notify && !rerr.unreachable.empty()) out.control.push_back({kBroadcast, encode(rerr)});
    }

    void on_timer(SimTime now, Output& out) {
        std::vector<NodeId> due;
        for (const auto& [d, disc] : discoveries_) {
            if (disc.deadline <= now) due.push_back(d);
        }
        for (NodeId d : due) {
            if (auto nh = next_hop(d, now)) {
                discoveries_.erase(d);
                out.reachable.push_back(d);
                continue;
            }
            if (discoveries_[d].rounds >= cfg_.rreq_retries) {
                discoveries_.erase(d);
                ++unreachable_;
                out.unreachable.push_back(d);
            } else {
                send_rreq(d, now, out);
            }
        }
        for (auto it = seen_.begin(); it != seen_.end();) {
            it = it->second.expires <= now ? seen_.erase(it) : std::next(it);
        }
        for (auto it = reverse_.begin(); it != reverse_.end();) {
            it = it->second.expires <= now ? reverse_.erase(it) : std::next(it);
        }
    }

    std::optional<SimTime> next_deadline() const {
        std::optional<SimTime> d;
        for (const auto& [_, disc] : discoveries_) {
            if (!d || disc.deadline < *d) d = disc.deadline;
        }
        return d;
    }

    std::size_t malformed() const { return malformed_; }
    std::size_t duplicates_dropped() const { return duplicates_; }
    std::size_t rreqs_sent() const { return rreqs_sent_; }
    std::size_t discoveries_failed() const { return unreachable_; }

private:
    struct Discovery {
        int rounds = 0;
        SimTime deadline{};
    };
    struct Seen {
        std::uint8_t best_hops = 0;
        SimTime expires{};
    };
    /// Where the best copy of the latest RREQ from orig for dest came from.
    struct Reverse {
        NodeId via = 0;
        SimTime expires{};
    };

    void send_rreq(NodeId dest, SimTime now, Output& out) {
        auto& disc = discoveries_[dest];
        ++disc.rounds;
        disc.deadline = now + cfg_.discovery_timeout;
        ++own_seq_;
        Rreq q;
        q.rreq_id = ++rreq_id_;
        q.ttl = cfg_.hop_limit;
        q.dest = dest;
        q.orig = self_;
        q.orig_seq = own_seq_;
        auto it = table_.find(dest);
        if (it != table_.end() && it->second.valid_seq) {
            q.dest_seq = it->second.dest_seq;
        } else {
            q.unknown_seq = true;
        }
        seen_[{self_, q.rreq_id}] = Seen{0, now + cfg_.rreq_record_lifetime};
        ++rreqs_sent_;
        out.control.push_back({kBroadcast, encode(q)});
    }

    /// Standard freshness rule: newer seq, or same seq and fewer hops, or nothing usable yet.
    bool update_route(NodeId dest, NodeId via, std::uint8_t hops, std::optional<std::uint32_t> seq, SimTime now,
                      Micros lifetime) {
        auto& e = table_[dest];
        const bool fresh = e.dest == dest && (e.valid || e.valid_seq);
        bool take = !fresh || !e.live(now);
        if (!take && seq) {
            take = !e.valid_seq || seq_newer(*seq, e.dest_seq) || (*seq == e.dest_seq && hops < e.hop_count);
        }
        if (!take && !seq) take = hops < e.hop_count;
        // Never let a stale-sequence reply overwrite a fresher known sequence.
        if (take && seq && e.valid_seq && seq_newer(e.dest_seq, *seq)) take = false;
        if (!take) return false;
        e.dest = dest;
        e.next_hop = via;
        e.hop_count = hops;
        if (seq) {
            e.dest_seq = *seq;
            e.valid_seq = true;
        }
        e.valid = true;
        e.expires = std::max(e.live(now) ? e.expires : SimTime{}, now + lifetime);
        return true;
    }

    void touch_neighbor(NodeId from, SimTime now) {
        auto it = table_.find(from);
        if (it != table_.end() && it->second.live(now) && it->second.hop_count == 1) {
            it->second.next_hop = from;
            it->second.expires = std::max(it->second.expires, now + cfg_.active_route_lifetime);
            return;
        }
        auto& e = table_[from];
        e.dest = from;
        e.next_hop = from;
        e.hop_count = 1;
        e.valid = true;
        e.expires = now + cfg_.active_route_lifetime;
    }

    void on_rreq(Rreq q, NodeId from, SimTime now, Output& out) {
        touch_neighbor(from, now);
        if (q.orig == self_) return;
        const auto hops = static_cast<std::uint8_t>(q.hop_count + 1);
        const auto key = std::make_pair(q.orig, q.rreq_id);
        auto seen = seen_.find(key);
        if (seen != seen_.end() && seen->second.best_hops <= hops) {
            ++duplicates_;
            return;
        }
        seen_[key] = Seen{hops, now + cfg_.rreq_record_lifetime};
        reverse_[{q.orig, q.dest}] = Reverse{from, now + cfg_.active_route_lifetime};
        update_route(q.orig, from, hops, q.orig_seq, now, cfg_.active_route_lifetime);

        if (q.dest == self_) {
            if (!q.unknown_seq && seq_newer(q.dest_seq, own_seq_)) own_seq_ = q.dest_seq;
            Rrep p;
            p.hop_count = 0;
            p.dest = self_;
            p.dest_seq = own_seq_;
            p.orig = q.orig;
            p.lifetime_ms = static_cast<std::uint32_t>(cfg_.active_route_lifetime.count() / 1000);
            out.control.push_back({from, encode(p)});
            return;
        }
        if (q.ttl <= 1) return;
        q.hop_count = hops;
        --q.ttl;
        out.control.push_back({kBroadcast, encode(q)});
    }

    void on_rrep(Rrep p, NodeId from, SimTime now, Output& out) {
        touch_neighbor(from, now);
        const auto hops = static_cast<std::uint8_t>(p.hop_count + 1);
        const Micros lifetime = std::chrono::milliseconds(p.lifetime_ms);
        if (p.dest == self_) return;
        const bool updated = update_route(p.dest, from, hops, p.dest_seq, now, lifetime);
        // A reply that does not improve our route is still relayed on the
        // strength of the live route we hold; otherwise concurrent discoveries
        // through a shared hop starve each other.
        auto fwd = table_.find(p.dest);
        if (!updated && (fwd == table_.end() || !fwd->second.live(now))) return;
        if (p.orig == self_) {
            if (discoveries_.erase(p.dest)) out.reachable.push_back(p.dest);
            return;
        }
        // The reply retraces this discovery's own shortest reverse path. The
        // table's route to orig may since have been replaced by a later flood
        // from orig that carried a fresher sequence over a longer path.
        auto back = table_.find(p.orig);
        const bool back_live = back != table_.end() && back->second.live(now);
        NodeId next = 0;
        if (auto rev = reverse_.find({p.orig, p.dest}); rev != reverse_.end() && rev->second.expires > now) {
            next = rev->second.via;
        } else if (back_live) {
            next = back->second.next_hop;
        } else {
            return;
        }
        table_[p.dest].precursors.insert(next);
        if (back_live) {
            back->second.precursors.insert(from);
            back->second.expires = std::max(back->second.expires, now + cfg_.active_route_lifetime);
        }
        p.hop_count = fwd->second.hop_count;
        p.dest_seq = fwd->second.dest_seq;
        out.control.push_back({next, encode(p)});
    }

    void on_rerr(const Rerr& e, NodeId from, SimTime now, Output& out) {
        touch_neighbor(from, now);
        Rerr fwd;
        for (auto [d, seq] : e.unreachable) {
            auto it = table_.find(d);
            if (it == table_.end() || !it->second.valid || it->second.next_hop != from) continue;
            auto& r = it->second;
            r.valid = false;
            if (!r.valid_seq || seq_newer(seq, r.dest_seq)) r.dest_seq = seq;
            r.valid_seq = true;
            if (!r.precursors.empty()) fwd.unreachable.emplace_back(d, r.dest_seq);
            r.precursors.clear();
        }
        if (!fwd.unreachable.empty()) out.control.push_back({kBroadcast, encode(fwd)});
    }

    NodeId self_;
    Config cfg_;
    std::uint32_t own_seq_ = 0;
    std::uint32_t rreq_id_ = 0;
    std::map<NodeId, RouteEntry> table_;
    std::map<NodeId, Discovery> discoveries_;
    std::map<std::pair<NodeId, std::uint32_t>, Seen> seen_;
    std::map<std::pair<NodeId, NodeId>, Reverse> reverse_;
    std::size_t malformed_ = 0;
    std::size_t duplicates_ = 0;
    std::size_t rreqs_sent_ = 0;
    std::size_t unreachable_ = 0;
};

/// Follows next-hop pointers for `dest` from every node holding a live entry;
/// returns false if any walk revisits a node.
template <typename RouterMap>
bool loop_free(const RouterMap& routers, NodeId dest, SimTime now) {
    for (const auto& [start, _] : routers) {
        std::set<NodeId> visited;
        NodeId cur = start;
        while (cur != dest) {
            if (!visited.insert(cur).second) return false;
            auto rit = routers.find(cur);
            if (rit == routers.end()) break;
            const auto& tbl = rit->second->table();
            auto e = tbl.find(dest);
            if (e == tbl.end() || !e->second.live(now)) break;
            cur = e->second.next_hop;
        }
    }
    return true;
}

}  // namespace meshgate::aodv
