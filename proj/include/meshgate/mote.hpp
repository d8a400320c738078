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

/// @file mote.hpp
/// @brief Simulated mote firmware: periodic sensing, telemetry client,
/// command server on port 7000 and appliance relays.

#include "meshgate/mesh_node.hpp"
#include "meshgate/reading.hpp"
#include "meshgate/tcp_host.hpp"

namespace meshgate::sim {

struct ApplianceSpec {
    std::uint8_t id = 1;
    double base_watts = 100.0;
    double noise_watts = 5.0;
    bool initially_on = true;
};

/// watts = base + uniform(-noise, +noise), clamped at 0.
class ConsumptionModel {
public:
    explicit ConsumptionModel(std::uint64_t seed) : rng_(seed) {}

    double sample(const ApplianceSpec& a) {
        std::uniform_real_distribution<double> u(-a.noise_watts, a.noise_watts);
        const double noise = a.noise_watts > 0 ? u(rng_) : 0.0;
        return std::max(0.0, a.base_watts + noise);
    }

    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

struct MoteConfig {
    Micros period = std::chrono::seconds(1);
    /// First tick lands at sensing_start + phase.
    Micros sensing_start = std::chrono::seconds(1);
    Micros phase{0};
    /// Each tick is delayed by uniform [0, period_jitter).
    Micros period_jitter{0};
    std::size_t queue_limit = 60;
    Micros reconnect_delay = std::chrono::seconds(1);
    /// Readings per telemetry segment (3 x 19 bytes fit the 64-byte payload cap).
    std::size_t batch = 3;
    std::uint64_t epoch_ms = 0;
    std::vector<ApplianceSpec> appliances{ApplianceSpec{}};
    transport::Timing timing{};
};

class Mote {
public:
    /// Sensing hook: (reading, simulated instant it was produced).
    using SenseHook = std::function<void(const SensorReading&, SimTime)>;

    static constexpr std::uint16_t kFirstEphemeralPort = 49152;

    Mote(NodeId id, Network& net, const addrmap::AddressMapConfig& amap, MoteConfig cfg, aodv::Config acfg = {},
         Trace* trace = nullptr)
        : cfg_(std::move(cfg)),
          amap_(amap),
          node_(id, net, amap, acfg, trace),
          events_(&net.events()),
          trace_(trace),
          model_(net.rng()()),
          tcp_(net.events(), [this](const Ipv6Address& to, const transport::Segment& s) { emit(to, s); }, net.rng()(),
               cfg_.timing),
          sense_timer_(net.events(), [this] { sense_tick(); }),
          reconnect_timer_(net.events(), [this] { connect(); }) {
        for (const auto& a : cfg_.appliances) relays_[a.id] = a.initially_on;
        node_.set_deliver([this](Ipv6Packet p) { on_packet(std::move(p)); });
        tcp_.listen(transport::kCommandPort, [this](auto id) { on_command_conn(id); });
    }

    Mote(const Mote&) = delete;
    Mote& operator=(const Mote&) = delete;

    /// Opens the telemetry connection now and schedules the first sensing tick.
    void start() {
        connect();
        schedule_tick(0);
    }

    NodeId id() const { return node_.id(); }
    Ipv6Address address() const { return node_.address(); }
    MeshNode& node() { return node_; }
    const MeshNode& node() const { return node_; }
    void set_sense_hook(SenseHook h) { hook_ = std::move(h); }

    /// [appliance_id, value] -> 0x06 and relay set, or 0x15 and no change.
    std::uint8_t handle_command(ByteView payload) {
        if (payload.size() != 2) return fail_command();
        auto it = relays_.find(payload[0]);
        if (it == relays_.end() || payload[1] > 1) return fail_command();
        it->second = payload[1] == 1;
        ++commands_applied_;
        if (trace_) {
            trace_->record(events_->now(), "relay", {{"mote", id()}, {"appliance", payload[0]}, {"on", it->second}});
        }
        return kAckOk;
    }

    std::optional<bool> relay(std::uint8_t appliance) const {
        auto it = relays_.find(appliance);
        if (it == relays_.end()) return std::nullopt;
        return it->second;
    }

    bool telemetry_established() const {
        auto* c = const_cast<TcpHost<Ipv6Address>&>(tcp_).find(telemetry_);
        return c && c->established();
    }

    std::uint32_t last_seq() const { return seq_; }
    std::size_t queued() const { return queue_.size(); }
    std::size_t queue_overflows() const { return queue_overflows_; }
    std::size_t reconnects() const { return reconnects_; }
    std::size_t commands_applied() const { return commands_applied_; }
    std::size_t commands_rejected() const { return commands_rejected_; }
    std::size_t checksum_errors() const { return checksum_errors_; }

private:
    std::uint8_t fail_command() {
        ++commands_rejected_;
        return kAckFail;
    }

    Ipv6Address telemetry_server() const { return addrmap::host4_to_virtual6(amap_.gateway_ipv4, amap_); }

    void emit(const Ipv6Address& to, const transport::Segment& s) {
        Ipv6Packet p;
        p.src = address();
        p.dst = to;
        p.next_header = transport::kProtocol;
        p.payload = transport::encode_segment(s, transport::PseudoHeader::v6(p.src, p.dst));
        node_.send(std::move(p));
    }

    void on_packet(Ipv6Packet p) {
        if (p.next_header != transport::kProtocol) return;
        transport::Segment s;
        try {
            s = transport::decode_segment(p.payload, transport::PseudoHeader::v6(p.src, p.dst));
        } catch (const Error&) {
            ++checksum_errors_;
            return;
        }
        tcp_.on_segment(p.src, s);
    }

    void connect() {
        const auto port = static_cast<std::uint16_t>(kFirstEphemeralPort + (attempts_++ % 16384));
        if (attempts_ > 1) ++reconnects_;
        telemetry_ = tcp_.connect(telemetry_server(), transport::kTelemetryPort, port,
                                  [this](auto id) { on_telemetry(id); });
        if (trace_) trace_->record(events_->now(), "connect", {{"mote", id()}, {"port", port}});
    }

    void on_telemetry(TcpHost<Ipv6Address>::ConnId cid) {
        if (cid != telemetry_) return;
        auto* c = tcp_.find(cid);
        if (c->timed_out() || c->was_reset() || c->state() == transport::State::closed) {
            // Whatever was handed over but not acknowledged goes back to the front.
            for (auto it = in_flight_.rbegin(); it != in_flight_.rend(); ++it) queue_.push_front(*it);
            in_flight_.clear();
            trim_queue();
            tcp_.erase(cid);
            telemetry_ = 0;
            if (trace_) trace_->record(events_->now(), "disconnect", {{"mote", id()}});
            reconnect_timer_.arm(events_->now() + cfg_.reconnect_delay);
            return;
        }
        if (c->idle()) in_flight_.clear();
        pump();
    }

    void pump() {
        auto* c = tcp_.find(telemetry_);
        if (!c || !c->established() || !c->idle() || queue_.empty()) return;
        Bytes batch;
        while (!queue_.empty() && in_flight_.size() < cfg_.batch) {
            encode_reading(queue_.front(), batch);
            in_flight_.push_back(queue_.front());
            queue_.pop_front();
        }
        tcp_.send(telemetry_, batch);
    }

    void on_command_conn(TcpHost<Ipv6Address>::ConnId cid) {
        auto* c = tcp_.find(cid);
        auto& buf = command_bufs_[cid];
        const Bytes in = c->take_delivered();
        buf.insert(buf.end(), in.begin(), in.end());
        while (buf.size() >= 2) {
            const std::uint8_t ack = handle_command(ByteView(buf).first(2));
            buf.erase(buf.begin(), buf.begin() + 2);
            tcp_.send(cid, Bytes{ack});
            c = tcp_.find(cid);
        }
        const auto st = c->state();
        if (st == transport::State::fin_wait) tcp_.close(cid);
        if (st == transport::State::closed || st == transport::State::closed_final) {
            command_bufs_.erase(cid);
            tcp_.erase(cid);
        }
    }

    void schedule_tick(std::uint64_t k) {
        Micros jitter{0};
        if (cfg_.period_jitter > Micros::zero()) {
            jitter = Micros(static_cast<long>(model_.rng()() % static_cast<std::uint64_t>(cfg_.period_jitter.count())));
        }
        next_tick_ = k;
        sense_timer_.arm(SimTime(cfg_.sensing_start + cfg_.phase + cfg_.period * static_cast<long>(k) + jitter));
    }

    void sense_tick() {
        const SimTime now = events_->now();
        for (const auto& a : cfg_.appliances) {
            SensorReading r;
            r.mote_id = id();
            r.appliance_id = a.id;
            r.seq = ++seq_;
            r.timestamp_ms = cfg_.epoch_ms + static_cast<std::uint64_t>(now.count() / 1000);
            const double w = relays_.at(a.id) ? model_.sample(a) : 0.0;
            r.watts_mw = static_cast<std::uint32_t>(std::lround(w * 1000.0));
            if (hook_) hook_(r, now);
            queue_.push_back(r);
            trim_queue();
        }
        pump();
        schedule_tick(next_tick_ + 1);
    }

    void trim_queue() {
        while (queue_.size() > cfg_.queue_limit) {
            queue_.pop_front();
            ++queue_overflows_;
        }
    }

    MoteConfig cfg_;
    addrmap::AddressMapConfig amap_;
    MeshNode node_;
    EventQueue* events_;
    Trace* trace_;
    ConsumptionModel model_;
    TcpHost<Ipv6Address> tcp_;
    Timer sense_timer_;
    Timer reconnect_timer_;
    SenseHook hook_;
    std::map<std::uint8_t, bool> relays_;
    std::deque<SensorReading> queue_;
    std::vector<SensorReading> in_flight_;
    std::map<TcpHost<Ipv6Address>::ConnId, Bytes> command_bufs_;
    TcpHost<Ipv6Address>::ConnId telemetry_ = 0;
    std::uint64_t next_tick_ = 0;
    std::uint32_t seq_ = 0;
    std::uint64_t attempts_ = 0;
    std::size_t queue_overflows_ = 0;
    std::size_t reconnects_ = 0;
    std::size_t commands_applied_ = 0;
    std::size_t commands_rejected_ = 0;
    std::size_t checksum_errors_ = 0;
};

}  // namespace meshgate::sim
