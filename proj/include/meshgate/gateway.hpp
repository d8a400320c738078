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

/// @file gateway.hpp
/// @brief Gateway process: bidirectional translation pump between the serial
/// tunnel and the IPv4 side, the telemetry server on gateway_ipv4:7001,
/// store-and-forward toward the middleware and per-packet timing.

#include "meshgate/sink.hpp"
#include "meshgate/store_forward.hpp"
#include "meshgate/tcp_host.hpp"
#include "meshgate/translate.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <mutex>

namespace meshgate::gateway {

/// Wall-clock transformation durations in microseconds. Safe for concurrent appends.
class TimingLog {
public:
    void append(double micros) {
        std::lock_guard lock(mu_);
        samples_.push_back(micros);
    }
    std::vector<double> snapshot() const {
        std::lock_guard lock(mu_);
        return samples_;
    }
    std::size_t size() const {
        std::lock_guard lock(mu_);
        return samples_.size();
    }
    void clear() {
        std::lock_guard lock(mu_);
        samples_.clear();
    }

private:
    mutable std::mutex mu_;
    std::vector<double> samples_;
};

struct TimingReport {
    std::size_t count = 0;
    double mean_us = 0;
    /// Population standard deviation of the samples.
    double jitter_us = 0;
    double bin_width_us = 10;
    /// bins[i] counts samples in [i*w, (i+1)*w).
    std::vector<std::size_t> bins;
};

/// Throws InsufficientSamples below two samples.
inline TimingReport timing_report(const std::vector<double>& samples, double bin_width_us = 10.0) {
    if (samples.size() < 2) throw Error(Errc::insufficient_samples, std::to_string(samples.size()) + " samples");
    TimingReport r;
    r.count = samples.size();
    r.bin_width_us = bin_width_us;
    double sum = 0;
    for (double s : samples) sum += s;
    r.mean_us = sum / static_cast<double>(samples.size());
    double sq = 0;
    for (double s : samples) sq += (s - r.mean_us) * (s - r.mean_us);
    r.jitter_us = std::sqrt(sq / static_cast<double>(samples.size()));
    for (double s : samples) {
        const auto i = static_cast<std::size_t>(std::max(0.0, std::floor(s / bin_width_us)));
        if (i >= r.bins.size()) r.bins.resize(i + 1, 0);
        ++r.bins[i];
    }
    return r;
}

inline nlohmann::json to_json(const TimingReport& r) {
    return {{"count", r.count}, {"mean_us", r.mean_us}, {"jitter_us", r.jitter_us},
            {"bin_width_us", r.bin_width_us}, {"bins", r.bins}};
}

inline std::string timing_csv(const std::vector<double>& samples) {
    std::string out = "packet_index,micros\n";
    char line[64];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu,%.3f\n", i, samples[i]);
        out += line;
    }
    return out;
}

enum class Delivery { ok, rejected, failed };

/// Upstream sink for readings. `rejected` means the middleware refused the
/// reading for good (filtered or malformed); `failed` means the link is down.
class MiddlewareLink {
public:
    virtual ~MiddlewareLink() = default;
    virtual Delivery deliver(const SensorReading& r) = 0;
};

struct GatewayConfig {
    addrmap::AddressMapConfig amap{};
    /// Durable buffer directory; in-memory when empty.
    std::optional<std::filesystem::path> buffer_dir;
    Micros flush_probe = std::chrono::seconds(1);
    transport::Timing timing{};
};

class Gateway {
public:
    using ReadingHook = std::function<void(const SensorReading&, SimTime)>;
    using HostSink = std::function<void(ByteView)>;

    Gateway(sim::EventQueue& events, GatewayConfig cfg, sim::SerialPipe& to_sink, MiddlewareLink* link,
            sim::Trace* trace = nullptr, std::uint64_t seed = 1)
        : cfg_(std::move(cfg)),
          events_(&events),
          to_sink_(&to_sink),
          link_(link),
          trace_(trace),
          buffer_(cfg_.buffer_dir ? std::make_unique<DurableBuffer>(*cfg_.buffer_dir) : std::make_unique<DurableBuffer>()),
          server_(events, [this](const Ipv4Address& to, const transport::Segment& s) { emit_local(to, s); }, seed,
                  cfg_.timing),
          probe_(events, [this] { flush(); }) {
        cfg_.amap.validate();
        server_.listen(transport::kTelemetryPort, [this](auto id) { on_telemetry(id); });
        if (!buffer_->empty()) probe_.arm(events.now());
    }

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Bytes arriving from the sink over the serial tunnel.
    void on_serial_bytes(ByteView b) {
        const auto before = deframer_.errors();
        deframer_.feed(b, [this](Bytes payload) { from_mesh(payload); });
        count(Errc::crc_error, deframer_.errors() - before);
    }

    /// One encoded IPv4 packet arriving on the external side.
    void on_external(ByteView bytes) {
        const auto t0 = std::chrono::steady_clock::now();
        Bytes frame;
        try {
            const Ipv4Packet p4 = decode_ipv4(bytes);
            const Ipv6Packet p6 = translate_4to6(p4, cfg_.amap);
            frame = encode_serial_frame(encode_ipv6(p6));
        } catch (const Error& e) {
            count(e.code());
            return;
        }
        record_timing(t0);
        try {
            to_sink_->write(std::move(frame));
            ++to_mesh_;
        } catch (const Error& e) {
            count(e.code());
        }
    }

    /// Registers an external IPv4 host reachable through this gateway.
    void attach_host(Ipv4Address addr, HostSink sink) { hosts_[addr] = std::move(sink); }
    void detach_host(Ipv4Address addr) { hosts_.erase(addr); }

    void set_reading_hook(ReadingHook h) { hook_ = std::move(h); }

    /// Tries to drain the buffer now; arms the probe when the link is down.
    void flush() {
        if (!link_) return;
        std::size_t n = 0;
        const auto pending = buffer_->pending();
        bool down = false;
        for (const auto& r : pending) {
            const auto d = link_->deliver(r);
            if (d == Delivery::failed) {
                down = true;
                break;
            }
            if (d == Delivery::rejected) ++rejected_;
            ++n;
        }
        buffer_->pop(n);
        if (down != !link_up_) {
            link_up_ = !down;
            if (trace_) trace_->record(events_->now(), "mw_link", {{"up", link_up_}, {"buffered", buffer_->size()}});
        }
        if (!buffer_->empty()) probe_.arm(events_->now() + cfg_.flush_probe);
    }

    const TimingLog& timing() const { return timing_; }
    TimingLog& timing() { return timing_; }
    const DurableBuffer& buffer() const { return *buffer_; }
    bool middleware_up() const { return link_up_; }
    const addrmap::AddressMapConfig& amap() const { return cfg_.amap; }

    std::size_t errors(Errc e) const {
        std::lock_guard lock(mu_);
        auto it = errors_.find(e);
        return it == errors_.end() ? 0 : it->second;
    }
    std::map<Errc, std::size_t> error_counts() const {
        std::lock_guard lock(mu_);
        return errors_;
    }
    std::size_t to_mesh() const { return to_mesh_; }
    std::size_t from_mesh_count() const { return from_mesh_; }
    std::size_t readings_accepted() const { return accepted_; }
    std::size_t readings_rejected_upstream() const { return rejected_; }
    std::size_t unrouted() const { return unrouted_; }

    nlohmann::json status() const {
        return {{"buffer_depth", buffer_->size()},
                {"middleware_link", link_up_ ? "up" : "down"},
                {"duplicates_dropped", buffer_->duplicates()},
                {"delivered", buffer_->delivered()},
                {"durable", buffer_->durable()}};
    }

private:
    void count(Errc e, std::size_t n = 1) {
        if (n == 0) return;
        std::lock_guard lock(mu_);
        errors_[e] += n;
    }

    void record_timing(std::chrono::steady_clock::time_point t0) {
        const auto dt = std::chrono::steady_clock::now() - t0;
        timing_.append(std::chrono::duration<double, std::micro>(dt).count());
    }

    /// Tunnel payload from the sink: translate and emit on the IPv4 side.
    void from_mesh(ByteView payload) {
        const auto t0 = std::chrono::steady_clock::now();
        Bytes out;
        Ipv4Packet p4;
        try {
            const Ipv6Packet p6 = decode_ipv6(payload);
            p4 = translate_6to4(p6, cfg_.amap);
            out = encode_ipv4(p4);
        } catch (const Error& e) {
            count(e.code());
            return;
        }
        record_timing(t0);
        ++from_mesh_;
        if (p4.dst == cfg_.amap.gateway_ipv4) {
            local_receive(p4);
            return;
        }
        auto it = hosts_.find(p4.dst);
        if (it == hosts_.end()) {
            ++unrouted_;
            return;
        }
        it->second(out);
    }

    void local_receive(const Ipv4Packet& p) {
        transport::Segment s;
        try {
            s = transport::decode_segment(p.payload, transport::PseudoHeader::v4(p.src, p.dst));
        } catch (const Error& e) {
            count(e.code());
            return;
        }
        server_.on_segment(p.src, s);
    }

    /// The telemetry server's replies leave through the same 4->6 path as any IPv4 host.
    void emit_local(const Ipv4Address& to, const transport::Segment& s) {
        Ipv4Packet p;
        p.src = cfg_.amap.gateway_ipv4;
        p.dst = to;
        p.protocol = transport::kProtocol;
        p.ttl = 64;
        p.payload = transport::encode_segment(s, transport::PseudoHeader::v4(p.src, p.dst));
        on_external(encode_ipv4(p));
    }

    void on_telemetry(sim::TcpHost<Ipv4Address>::ConnId id) {
        auto* c = server_.find(id);
        const Bytes in = c->take_delivered();
        if (!in.empty()) {
            std::vector<SensorReading> readings;
            try {
                readings = streams_[id].feed(in);
            } catch (const Error& e) {
                count(e.code());
            }
            for (const auto& r : readings) ingest(r);
        }
        const auto st = c->state();
        if (st == transport::State::fin_wait) server_.close(id);
        if (st == transport::State::closed || st == transport::State::closed_final) {
            streams_.erase(id);
            server_.erase(id);
        }
    }

    void ingest(const SensorReading& r) {
        if (!buffer_->append(r)) return;
        ++accepted_;
        if (hook_) hook_(r, events_->now());
        if (trace_) trace_->record(events_->now(), "ingest", {{"mote", r.mote_id}, {"seq", r.seq}});
        if (link_up_) {
            flush();
        } else {
            probe_.arm(events_->now() + cfg_.flush_probe);
        }
    }

    GatewayConfig cfg_;
    sim::EventQueue* events_;
    sim::SerialPipe* to_sink_;
    MiddlewareLink* link_;
    sim::Trace* trace_;
    std::unique_ptr<DurableBuffer> buffer_;
    sim::TcpHost<Ipv4Address> server_;
    sim::Timer probe_;
    SerialDeframer deframer_;
    TimingLog timing_;
    ReadingHook hook_;
    std::map<Ipv4Address, HostSink> hosts_;
    std::map<sim::TcpHost<Ipv4Address>::ConnId, ReadingStream> streams_;
    mutable std::mutex mu_;
    std::map<Errc, std::size_t> errors_;
    bool link_up_ = true;
    std::size_t to_mesh_ = 0;
    std::size_t from_mesh_ = 0;
    std::size_t accepted_ = 0;
    std::size_t rejected_ = 0;
    std::size_t unrouted_ = 0;
};

struct CommandResult {
    enum class Status { ok, rejected, timeout } status = Status::timeout;
    std::uint8_t ack = 0;
    Micros rtt{0};
};

/// External IPv4 host that opens a connection to a mote's virtual address on
/// port 7000, sends [appliance, value] and waits for the one-byte ack.
class CommandClient {
public:
    CommandClient(sim::EventQueue& events, Ipv4Address self, std::uint64_t seed)
        : events_(&events),
          self_(self),
          tcp_(events, [this](const Ipv4Address& to, const transport::Segment& s) { emit(to, s); }, seed) {}

    CommandClient(const CommandClient&) = delete;
    CommandClient& operator=(const CommandClient&) = delete;

    Ipv4Address address() const { return self_; }

    /// Routes outgoing packets; typically Gateway::on_external.
    void set_uplink(std::function<void(ByteView)> up) { uplink_ = std::move(up); }

    /// Incoming IPv4 packet addressed to this host.
    void on_packet(ByteView bytes) {
        Ipv4Packet p;
        transport::Segment s;
        try {
            p = decode_ipv4(bytes);
            s = transport::decode_segment(p.payload, transport::PseudoHeader::v4(p.src, p.dst));
        } catch (const Error&) {
            ++errors_;
            return;
        }
        tcp_.on_segment(p.src, s);
    }

    void send(Ipv4Address mote, std::uint8_t appliance, std::uint8_t value, Micros timeout,
              std::function<void(CommandResult)> done) {
        const auto port = static_cast<std::uint16_t>(50000 + (next_port_++ % 10000));
        auto req = std::make_shared<Request>();
        req->started = events_->now();
        req->payload = Bytes{appliance, value};
        req->done = std::move(done);
        req->id = tcp_.connect(mote, transport::kCommandPort, port, [this, req](auto id) { on_update(*req, id); });
        requests_[req->id] = req;
        events_->schedule_in(timeout, [this, req] { finish(*req, CommandResult{}); });
    }

    std::size_t open_requests() const { return requests_.size(); }

private:
    struct Request {
        sim::TcpHost<Ipv4Address>::ConnId id = 0;
        SimTime started{};
        Bytes payload;
        bool sent = false;
        bool finished = false;
        std::function<void(CommandResult)> done;
    };

    void emit(const Ipv4Address& to, const transport::Segment& s) {
        Ipv4Packet p;
        p.src = self_;
        p.dst = to;
        p.protocol = transport::kProtocol;
        p.ttl = 64;
        p.payload = transport::encode_segment(s, transport::PseudoHeader::v4(p.src, p.dst));
        if (uplink_) uplink_(encode_ipv4(p));
    }

    void on_update(Request& req, sim::TcpHost<Ipv4Address>::ConnId id) {
        auto* c = tcp_.find(id);
        if (!c) return;
        if (c->timed_out() || c->was_reset()) {
            finish(req, CommandResult{});
            return;
        }
        if (c->established() && !req.sent) {
            req.sent = true;
            tcp_.send(id, req.payload);
            return;
        }
        const Bytes got = c->take_delivered();
        if (!got.empty() && !req.finished) {
            CommandResult r;
            r.ack = got[0];
            r.status = got[0] == kAckOk ? CommandResult::Status::ok : CommandResult::Status::rejected;
            r.rtt = events_->now() - req.started;
            finish(req, r);
            tcp_.close(id);
        }
        if (c->state() == transport::State::closed_final) tcp_.erase(id);
    }

    void finish(Request& req, CommandResult r) {
        if (req.finished) return;
        req.finished = true;
        auto keep = requests_[req.id];
        requests_.erase(req.id);
        if (r.status == CommandResult::Status::timeout) tcp_.erase(req.id);
        if (req.done) req.done(r);
    }

    sim::EventQueue* events_;
    Ipv4Address self_;
    sim::TcpHost<Ipv4Address> tcp_;
    std::function<void(ByteView)> uplink_;
    std::map<sim::TcpHost<Ipv4Address>::ConnId, std::shared_ptr<Request>> requests_;
    std::uint64_t next_port_ = 0;
    std::size_t errors_ = 0;
};

}  // namespace meshgate::gateway
