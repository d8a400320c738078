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

/// @file scenario.hpp
/// @brief Scenario description and the World that runs it: motes, sink,
/// serial tunnel, gateway and an external command client on one event queue.

#include "meshgate/gateway.hpp"
#include "meshgate/middleware.hpp"
#include "meshgate/mote.hpp"

namespace meshgate::sim {

struct LinkSpec {
    NodeId a = 0;
    NodeId b = 0;
    Micros latency{2000};
    double loss = 0.0;
};

enum class TopologyKind { line, star, random, explicit_links };

inline std::string_view to_string(TopologyKind k) {
    switch (k) {
        case TopologyKind::line: return "line";
        case TopologyKind::star: return "star";
        case TopologyKind::random: return "random";
        case TopologyKind::explicit_links: return "explicit";
    }
    return "?";
}

struct ScenarioConfig {
    std::string name = "default";
    std::uint64_t seed = 1;
    /// Motes besides the sink; ids 1..motes.
    std::uint16_t motes = 7;
    TopologyKind topology = TopologyKind::line;
    /// Used when topology is explicit_links.
    std::vector<LinkSpec> links;
    Micros link_latency = std::chrono::milliseconds(2);
    double link_loss = 0.0;
    /// Random mesh: probability of each extra (non-tree) edge.
    double random_extra_edge_prob = 0.3;

    Micros duration = std::chrono::seconds(60);
    Micros serial_latency = std::chrono::milliseconds(1);
    /// Latency between the gateway and external IPv4 hosts.
    Micros external_latency = std::chrono::microseconds(500);

    MoteConfig mote{};
    /// Spread each mote's first tick uniformly over [0, phase_spread).
    bool random_phase = true;
    /// Defaults to one full period. Smaller values make the motes sense in a
    /// common window each period, so load arrives in bursts.
    std::optional<Micros> phase_spread;
    aodv::Config aodv{};
    addrmap::AddressMapConfig amap{};
    Ipv4Address client_ipv4 = Ipv4Address::parse("10.0.0.2");
    std::optional<std::filesystem::path> buffer_dir;
    bool trace = true;

    void validate() const {
        amap.validate();
        if (motes == 0) throw Error(Errc::config_error, "motes must be >= 1");
        if (motes > 1000) throw Error(Errc::config_error, "motes must be <= 1000");
        if (link_latency <= Micros::zero()) throw Error(Errc::config_error, "link latency must be > 0");
        if (!(link_loss >= 0.0 && link_loss <= 1.0)) throw Error(Errc::config_error, "link loss outside [0,1]");
        if (mote.period <= Micros::zero()) throw Error(Errc::config_error, "sensing period must be > 0");
        if (mote.period_jitter < Micros::zero() || mote.period_jitter >= mote.period) {
            throw Error(Errc::config_error, "period_jitter must be in [0, period)");
        }
        if (phase_spread && (*phase_spread < Micros::zero() || *phase_spread > mote.period)) {
            throw Error(Errc::config_error, "phase_spread must be in [0, period]");
        }
        if (duration <= Micros::zero()) throw Error(Errc::config_error, "duration must be > 0");
        if (serial_latency <= Micros::zero()) throw Error(Errc::config_error, "serial latency must be > 0");
        if (amap.in_pool(client_ipv4)) throw Error(Errc::config_error, "client_ipv4 lies inside the pool");
        if (client_ipv4 == amap.gateway_ipv4) throw Error(Errc::config_error, "client_ipv4 equals gateway_ipv4");
        if (mote.appliances.empty()) throw Error(Errc::config_error, "at least one appliance per mote");
        for (const auto& l : links) {
            if (l.a > motes || l.b > motes) throw Error(Errc::config_error, "link endpoint outside 0..motes");
        }
        if (topology == TopologyKind::explicit_links && links.empty()) {
            throw Error(Errc::config_error, "explicit topology needs links");
        }
    }
};

/// Expands the preset into concrete links. Random meshes are a seeded random
/// spanning tree plus extra edges, so they are always connected.
inline std::vector<LinkSpec> build_links(const ScenarioConfig& cfg) {
    std::vector<LinkSpec> out;
    auto add = [&](NodeId a, NodeId b) { out.push_back({a, b, cfg.link_latency, cfg.link_loss}); };
    switch (cfg.topology) {
        case TopologyKind::line:
            for (NodeId n = 0; n < cfg.motes; ++n) add(n, static_cast<NodeId>(n + 1));
            break;
        case TopologyKind::star:
            for (NodeId n = 1; n <= cfg.motes; ++n) add(0, n);
            break;
        case TopologyKind::random: {
            std::mt19937_64 rng(cfg.seed ^ 0x5EEDULL);
            std::set<std::pair<NodeId, NodeId>> have;
            for (NodeId n = 1; n <= cfg.motes; ++n) {
                const auto parent = static_cast<NodeId>(rng() % n);
                add(parent, n);
                have.insert({parent, n});
            }
            for (NodeId a = 0; a <= cfg.motes; ++a) {
                for (NodeId b = static_cast<NodeId>(a + 1); b <= cfg.motes; ++b) {
                    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                    if (!have.count({a, b}) && u < cfg.random_extra_edge_prob) add(a, b);
                }
            }
            break;
        }
        case TopologyKind::explicit_links:
            out = cfg.links;
            break;
    }
    return out;
}

/// Records when each reading was produced and when the gateway accepted it.
struct DelayProbe {
    struct Sample {
        std::uint16_t mote_id;
        std::uint32_t seq;
        SimTime sent;
        SimTime received;
        Micros delay() const { return received - sent; }
    };

    void sent(const SensorReading& r, SimTime at) { pending[{r.mote_id, r.seq}] = at; }

    void received(const SensorReading& r, SimTime at) {
        auto it = pending.find({r.mote_id, r.seq});
        if (it == pending.end()) return;
        samples.push_back({r.mote_id, r.seq, it->second, at});
        pending.erase(it);
    }

    std::map<std::pair<std::uint16_t, std::uint32_t>, SimTime> pending;
    std::vector<Sample> samples;
};

class World {
public:
    explicit World(ScenarioConfig cfg, gateway::MiddlewareLink* link = nullptr)
        : cfg_((cfg.validate(), std::move(cfg))),
          trace_(cfg_.trace),
          net_(events_, cfg_.seed, &trace_),
          up_(events_, cfg_.serial_latency),
          down_(events_, cfg_.serial_latency),
          link_(link),
          sink_(net_, cfg_.amap, cfg_.aodv, &trace_),
          client_(events_, cfg_.client_ipv4, net_.rng()()) {
        std::mt19937_64 phase_rng(net_.rng()());
        for (NodeId n = 1; n <= cfg_.motes; ++n) {
            MoteConfig mc = cfg_.mote;
            const Micros spread = cfg_.phase_spread.value_or(mc.period);
            if (cfg_.random_phase && spread > Micros::zero()) {
                mc.phase = Micros(static_cast<long>(phase_rng() % static_cast<std::uint64_t>(spread.count())));
            }
            auto m = std::make_unique<Mote>(n, net_, cfg_.amap, mc, cfg_.aodv, &trace_);
            m->set_sense_hook([this](const SensorReading& r, SimTime at) { probe_.sent(r, at); });
            motes_.push_back(std::move(m));
        }
        for (const auto& l : build_links(cfg_)) net_.topology().add_link(l.a, l.b, {l.latency, l.loss});
        sink_.attach(up_, down_);
        client_.set_uplink([this](ByteView b) {
            Bytes copy(b.begin(), b.end());
            events_.schedule_in(cfg_.external_latency, [this, copy] {
                if (gateway_) gateway_->on_external(copy);
            });
        });
        start_gateway();
        for (auto& m : motes_) m->start();
    }

    World(const World&) = delete;
    World& operator=(const World&) = delete;

    EventQueue& events() { return events_; }
    Network& network() { return net_; }
    Trace& trace() { return trace_; }
    const ScenarioConfig& config() const { return cfg_; }
    Sink& sink() { return sink_; }
    gateway::Gateway& gateway() { return *gateway_; }
    gateway::CommandClient& client() { return client_; }
    Mote& mote(NodeId id) { return *motes_.at(id - 1); }
    std::size_t mote_count() const { return motes_.size(); }
    DelayProbe& probe() { return probe_; }
    SimTime now() const { return events_.now(); }

    /// Milliseconds on the epoch clock the motes stamp readings with.
    std::uint64_t epoch_now_ms() const {
        return cfg_.mote.epoch_ms + static_cast<std::uint64_t>(events_.now().count() / 1000);
    }

    void run_until(SimTime t) { events_.run_until(t); }
    void run_for(Micros d) { events_.run_until(events_.now() + d); }
    void run() { events_.run_until(SimTime(cfg_.duration)); }

    /// Tears the gateway down and builds a fresh one from the same buffer directory.
    void restart_gateway() {
        trace_.record(events_.now(), "gateway_restart");
        gateway_.reset();
        start_gateway();
    }

    /// Sends a command through the gateway and runs the simulation until the ack
    /// or the timeout.
    gateway::CommandResult command(NodeId mote, std::uint8_t appliance, std::uint8_t value,
                                   Micros timeout = std::chrono::seconds(30)) {
        return command_to(addrmap::mote_virtual4(mote, cfg_.amap), appliance, value, timeout);
    }

    gateway::CommandResult command_to(Ipv4Address virtual4, std::uint8_t appliance, std::uint8_t value,
                                      Micros timeout = std::chrono::seconds(30)) {
        std::optional<gateway::CommandResult> result;
        client_.send(virtual4, appliance, value, timeout, [&result](gateway::CommandResult r) { result = r; });
        events_.run_while_not([&] { return result.has_value(); }, events_.now() + timeout + std::chrono::seconds(1));
        trace_.record(events_.now(), "command",
                      {{"to", virtual4.to_string()}, {"appliance", appliance}, {"value", value},
                       {"status", result ? static_cast<int>(result->status) : -1}});
        return result.value_or(gateway::CommandResult{});
    }

private:
    void start_gateway() {
        gateway::GatewayConfig gc;
        gc.amap = cfg_.amap;
        gc.buffer_dir = cfg_.buffer_dir;
        gateway_ = std::make_unique<gateway::Gateway>(events_, gc, down_, link_, &trace_, ++gateway_generation_);
        gateway_->set_reading_hook([this](const SensorReading& r, SimTime at) { probe_.received(r, at); });
        gateway_->attach_host(cfg_.client_ipv4, [this](ByteView b) {
            Bytes copy(b.begin(), b.end());
            events_.schedule_in(cfg_.external_latency, [this, copy] { client_.on_packet(copy); });
        });
        up_.set_receiver([this](ByteView b) {
            if (gateway_) gateway_->on_serial_bytes(b);
        });
    }

    ScenarioConfig cfg_;
    EventQueue events_;
    Trace trace_;
    Network net_;
    SerialPipe up_;
    SerialPipe down_;
    gateway::MiddlewareLink* link_;
    DelayProbe probe_;
    Sink sink_;
    gateway::CommandClient client_;
    std::vector<std::unique_ptr<Mote>> motes_;
    std::unique_ptr<gateway::Gateway> gateway_;
    std::uint64_t gateway_generation_ = 0;
};

/// Middleware commands executed inside the simulation: each call runs the
/// world until the ack or the timeout. Must not be called from an event handler.
class SimCommandTransport : public middleware::CommandTransport {
public:
    explicit SimCommandTransport(World& w, Micros timeout = std::chrono::seconds(30)) : world_(&w), timeout_(timeout) {}

    gateway::CommandResult send(Ipv4Address virtual4, std::uint8_t appliance, std::uint8_t value) override {
        return world_->command_to(virtual4, appliance, value, timeout_);
    }

private:
    World* world_;
    Micros timeout_;
};

}  // namespace meshgate::sim
