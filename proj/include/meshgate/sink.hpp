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

/// @file sink.hpp
/// @brief The sink (mote 0) and the serial tunnel to the gateway.

#include "meshgate/mesh_node.hpp"

namespace meshgate::sim {

/// One direction of the serial tunnel: a reliable in-order byte pipe with
/// fixed latency. Constant latency plus FIFO tie-breaking keeps order.
class SerialPipe {
public:
    using Receiver = std::function<void(ByteView)>;

    SerialPipe(EventQueue& events, Micros latency = std::chrono::milliseconds(1))
        : events_(&events), latency_(latency) {}

    void set_receiver(Receiver r) { receiver_ = std::move(r); }
    void set_up(bool up) { up_ = up; }
    bool up() const { return up_; }
    Micros latency() const { return latency_; }

    /// Throws SerialDown when the pipe is down.
    void write(Bytes bytes) {
        if (!up_) throw Error(Errc::serial_down);
        bytes_written_ += bytes.size();
        events_->schedule_in(latency_, [this, b = std::move(bytes)] {
            if (receiver_) receiver_(b);
        });
    }

    std::size_t bytes_written() const { return bytes_written_; }

private:
    EventQueue* events_;
    Micros latency_;
    Receiver receiver_;
    bool up_ = true;
    std::size_t bytes_written_ = 0;
};

class Sink {
public:
    Sink(Network& net, const addrmap::AddressMapConfig& amap, aodv::Config acfg = {}, Trace* trace = nullptr)
        : amap_(amap), node_(MeshNode::kSinkId, net, amap, acfg, trace), events_(&net.events()), trace_(trace) {
        node_.set_deliver([this](Ipv6Packet p) { mesh_to_serial(p); });
    }

    Sink(const Sink&) = delete;
    Sink& operator=(const Sink&) = delete;

    /// `up` carries sink -> gateway bytes; `down` carries gateway -> sink bytes.
    void attach(SerialPipe& up, SerialPipe& down) {
        up_ = &up;
        down.set_receiver([this](ByteView b) { on_serial_bytes(b); });
    }

    MeshNode& node() { return node_; }

    /// Packet that reached the sink from the mesh. Off-mesh traffic goes up the tunnel.
    void mesh_to_serial(const Ipv6Packet& p) {
        if (amap_.on_mesh(p.dst)) {
            ++for_sink_;
            return;
        }
        if (!up_ || !up_->up()) {
            ++serial_down_;
            if (trace_) trace_->record(events_->now(), "sink_drop", {{"reason", "SerialDown"}});
            return;
        }
        up_->write(encode_serial_frame(encode_ipv6(p)));
        ++to_serial_;
    }

    void on_serial_bytes(ByteView b) {
        const auto before = deframer_.errors();
        deframer_.feed(b, [this](Bytes payload) { on_serial_payload(payload); });
        crc_errors_ += deframer_.errors() - before;
    }

    /// Decoded tunnel payload from the gateway.
    void on_serial_payload(ByteView payload) {
        Ipv6Packet p;
        try {
            p = decode_ipv6(payload);
        } catch (const Error&) {
            ++malformed_;
            return;
        }
        if (!amap_.on_mesh(p.dst)) {
            ++not_for_mesh_;
            if (trace_) trace_->record(events_->now(), "sink_drop", {{"reason", "NotForMesh"}});
            return;
        }
        ++to_mesh_;
        node_.send(std::move(p));
    }

    std::size_t to_serial() const { return to_serial_; }
    std::size_t to_mesh() const { return to_mesh_; }
    std::size_t serial_down_drops() const { return serial_down_; }
    std::size_t crc_errors() const { return crc_errors_; }
    std::size_t not_for_mesh() const { return not_for_mesh_; }
    std::size_t malformed() const { return malformed_; }

private:
    addrmap::AddressMapConfig amap_;
    MeshNode node_;
    EventQueue* events_;
    Trace* trace_;
    SerialPipe* up_ = nullptr;
    SerialDeframer deframer_;
    std::size_t to_serial_ = 0;
    std::size_t to_mesh_ = 0;
    std::size_t serial_down_ = 0;
    std::size_t crc_errors_ = 0;
    std::size_t not_for_mesh_ = 0;
    std::size_t malformed_ = 0;
    std::size_t for_sink_ = 0;
};

}  // namespace meshgate::sim
