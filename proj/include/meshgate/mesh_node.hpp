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

/// @file mesh_node.hpp
/// @brief IPv6 forwarding for one mesh node: AODV next hops, 6LoWPAN adaptation
/// on every hop, and a bounded per-destination buffer while discovery runs.

#include "meshgate/addrmap.hpp"
#include "meshgate/aodv.hpp"
#include "meshgate/mesh_sim.hpp"
#include "meshgate/sixlowpan.hpp"

namespace meshgate::sim {

class MeshNode : public FrameHandler {
public:
    /// Called for packets whose link destination is this node.
    using Deliver = std::function<void(Ipv6Packet)>;

    static constexpr std::size_t kPendingLimit = 32;
    static constexpr NodeId kSinkId = 0;

    MeshNode(NodeId id, Network& net, const addrmap::AddressMapConfig& amap, aodv::Config acfg = {},
             Trace* trace = nullptr)
        : id_(id),
          net_(&net),
          amap_(amap),
          router_(id, acfg),
          reasm_(amap.mesh_prefix6),
          tags_(static_cast<std::uint16_t>(id * 4099u)),
          timer_(net.events(), [this] { on_timer(); }),
          trace_(trace) {
        net.attach(id, this);
    }

    MeshNode(const MeshNode&) = delete;
    MeshNode& operator=(const MeshNode&) = delete;

    NodeId id() const { return id_; }
    Ipv6Address address() const { return addrmap::mote_address(id_, amap_); }
    const aodv::Router& router() const { return router_; }
    aodv::Router& router() { return router_; }

    void set_deliver(Deliver d) { deliver_ = std::move(d); }

    /// Link address responsible for an IPv6 destination: the suffix on-mesh, else the sink.
    NodeId link_dest(const Ipv6Address& dst) const {
        return amap_.on_mesh(dst) ? addrmap::mote_id_of(dst) : kSinkId;
    }

    /// Originates a packet from this node.
    void send(Ipv6Packet p) { route(std::move(p), id_); }

    void on_frame(const LinkFrame& f) override {
        const SimTime now = net_->events().now();
        if (f.dst_short != id_ && f.dst_short != kBroadcastShort) return;
        if (f.frame_type == FrameType::aodv_control) {
            aodv::Router::Output out;
            router_.on_control(f.payload, f.src_short, now, out);
            apply(out);
            return;
        }
        if (f.frame_type != FrameType::data) return;
        std::optional<Ipv6Packet> p;
        try {
            p = reasm_.reassemble(f.src_short, f.payload, now);
        } catch (const Error& e) {
            ++reassembly_errors_;
            if (trace_) trace_->record(now, "reasm_err", {{"node", id_}, {"err", to_string(e.code())}});
            return;
        }
        if (!p) return;
        if (link_dest(p->dst) == id_) {
            ++delivered_;
            if (deliver_) deliver_(std::move(*p));
            return;
        }
        if (p->hop_limit <= 1) {
            ++hop_limit_drops_;
            return;
        }
        --p->hop_limit;
        ++forwarded_;
        route(std::move(*p), f.src_short);
    }

    void on_link_failure(const LinkFrame& f) override {
        const SimTime now = net_->events().now();
        aodv::Router::Output out;
        router_.on_link_break(f.dst_short, now, out);
        if (trace_) trace_->record(now, "link_break", {{"node", id_}, {"hop", f.dst_short}});
        apply(out);
    }

    std::size_t delivered() const { return delivered_; }
    std::size_t forwarded() const { return forwarded_; }
    std::size_t unreachable_drops() const { return unreachable_drops_; }
    std::size_t pending_drops() const { return pending_drops_; }
    std::size_t reassembly_errors() const { return reassembly_errors_; }
    std::size_t hop_limit_drops() const { return hop_limit_drops_; }

private:
    void route(Ipv6Packet p, NodeId prev) {
        const SimTime now = net_->events().now();
        const NodeId dest = link_dest(p.dst);
        if (dest == id_) {
            ++delivered_;
            if (deliver_) deliver_(std::move(p));
            return;
        }
        aodv::Router::Output out;
        if (auto nh = router_.resolve(dest, now, out)) {
            router_.note_forward(dest, prev, now);
            transmit(p, *nh);
        } else {
            auto& q = pending_[dest];
            if (q.size() >= kPendingLimit) {
                q.pop_front();
                ++pending_drops_;
            }
            q.push_back(std::move(p));
        }
        apply(out);
    }

    void transmit(const Ipv6Packet& p, NodeId next_hop) {
        for (auto& payload : sixlowpan::adapt(p, amap_.mesh_prefix6, kLinkPayloadMax, tags_)) {
            LinkFrame f;
            f.dst_short = next_hop;
            f.frame_type = FrameType::data;
            f.payload = std::move(payload);
            net_->enqueue(id_, std::move(f), Priority::data);
        }
    }

    void apply(aodv::Router::Output& out) {
        const SimTime now = net_->events().now();
        for (auto& s : out.control) {
            LinkFrame f;
            f.dst_short = s.to;
            f.frame_type = FrameType::aodv_control;
            f.payload = std::move(s.msg);
            net_->enqueue(id_, std::move(f), Priority::control);
        }
        for (NodeId d : out.reachable) {
            auto it = pending_.find(d);
            if (it == pending_.end()) continue;
            auto q = std::move(it->second);
            pending_.erase(it);
            if (trace_) trace_->record(now, "route_up", {{"node", id_}, {"dest", d}, {"flushed", q.size()}});
            for (auto& p : q) route(std::move(p), id_);
        }
        for (NodeId d : out.unreachable) {
            auto it = pending_.find(d);
            const std::size_t n = it == pending_.end() ? 0 : it->second.size();
            unreachable_drops_ += n;
            if (it != pending_.end()) pending_.erase(it);
            if (trace_) trace_->record(now, "unreachable", {{"node", id_}, {"dest", d}, {"dropped", n}});
        }
        if (auto d = router_.next_deadline()) timer_.arm(*d);
    }

    void on_timer() {
        aodv::Router::Output out;
        router_.on_timer(net_->events().now(), out);
        apply(out);
    }

    NodeId id_;
    Network* net_;
    addrmap::AddressMapConfig amap_;
    aodv::Router router_;
    sixlowpan::ReassemblyBuffer reasm_;
    sixlowpan::TagAllocator tags_;
    Timer timer_;
    Trace* trace_;
    Deliver deliver_;
    std::map<NodeId, std::deque<Ipv6Packet>> pending_;
    std::size_t delivered_ = 0;
    std::size_t forwarded_ = 0;
    std::size_t unreachable_drops_ = 0;
    std::size_t pending_drops_ = 0;
    std::size_t reassembly_errors_ = 0;
    std::size_t hop_limit_drops_ = 0;
};

}  // namespace meshgate::sim
