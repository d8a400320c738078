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

/// @file experiments.hpp
/// @brief The two measurement runs: end-to-end delay and jitter against the
/// number of motes, and per-packet gateway transformation time.
///
/// Delay is measured from the instant a mote produces a reading to the
/// instant the gateway accepts it from the telemetry stream, so it includes
/// mote queueing, airtime, fragmentation, forwarding and the serial tunnel.

#include "meshgate/scenario.hpp"

namespace meshgate::experiments {

inline double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Population standard deviation.
inline double stddev_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double sq = 0;
    for (double x : xs) sq += (x - m) * (x - m);
    return std::sqrt(sq / static_cast<double>(xs.size()));
}

struct TrafficLevel {
    std::uint16_t motes = 0;
    std::size_t produced = 0;
    std::vector<sim::DelayProbe::Sample> samples;
    double mean_ms = 0;
    double jitter_ms = 0;

    std::vector<double> delays_ms() const {
        std::vector<double> out;
        out.reserve(samples.size());
        for (const auto& s : samples) out.push_back(static_cast<double>(s.delay().count()) / 1000.0);
        return out;
    }
};

struct TrafficReport {
    std::uint64_t seed = 0;
    Micros duration{0};
    std::string topology;
    std::vector<TrafficLevel> levels;

    nlohmann::json to_json() const {
        nlohmann::json lv = nlohmann::json::array();
        for (const auto& l : levels) {
            lv.push_back({{"motes", l.motes},
                          {"produced", l.produced},
                          {"samples", l.samples.size()},
                          {"mean_delay_ms", l.mean_ms},
                          {"jitter_ms", l.jitter_ms}});
        }
        return {{"experiment", "traffic"},
                {"seed", seed},
                {"duration_s", static_cast<double>(duration.count()) / 1e6},
                {"topology", topology},
                {"jitter_definition", "population standard deviation of per-reading delay"},
                {"levels", lv}};
    }

    /// motes,samples,mean_delay_ms,jitter_ms
    std::string summary_csv() const {
        std::string out = "motes,samples,mean_delay_ms,jitter_ms\n";
        char line[128];
        for (const auto& l : levels) {
            std::snprintf(line, sizeof line, "%u,%zu,%.6f,%.6f\n", l.motes, l.samples.size(), l.mean_ms, l.jitter_ms);
            out += line;
        }
        return out;
    }

    /// Raw samples, from which every summary figure can be recomputed.
    std::string samples_csv() const {
        std::string out = "motes,mote_id,seq,sent_us,received_us,delay_us\n";
        char line[160];
        for (const auto& l : levels) {
            for (const auto& s : l.samples) {
                std::snprintf(line, sizeof line, "%u,%u,%u,%lld,%lld,%lld\n", l.motes, s.mote_id, s.seq,
                              static_cast<long long>(s.sent.count()), static_cast<long long>(s.received.count()),
                              static_cast<long long>(s.delay().count()));
                out += line;
            }
        }
        return out;
    }
};

/// Runs `base` once per mote count with the given seed and duration.
inline TrafficReport run_traffic(sim::ScenarioConfig base, const std::vector<std::uint16_t>& counts, Micros duration,
                                 std::uint64_t seed) {
    TrafficReport rep;
    rep.seed = seed;
    rep.duration = duration;
    rep.topology = std::string(sim::to_string(base.topology));
    for (auto n : counts) {
        sim::ScenarioConfig cfg = base;
        cfg.motes = n;
        cfg.seed = seed;
        cfg.duration = duration;
        cfg.trace = false;
        cfg.buffer_dir.reset();
        sim::World w(cfg);
        w.run();
        TrafficLevel lv;
        lv.motes = n;
        lv.samples = w.probe().samples;
        lv.produced = lv.samples.size() + w.probe().pending.size();
        const auto d = lv.delays_ms();
        lv.mean_ms = mean_of(d);
        lv.jitter_ms = stddev_of(d);
        rep.levels.push_back(std::move(lv));
    }
    return rep;
}

struct XlatReport {
    std::vector<double> samples_us;
    gateway::TimingReport timing;
    std::size_t written_to_sink = 0;

    nlohmann::json to_json() const {
        auto j = gateway::to_json(timing);
        j["experiment"] = "xlat";
        j["direction"] = "4to6";
        j["written_to_sink"] = written_to_sink;
        return j;
    }
};

/// Pumps `n` command packets from an external host through the gateway's
/// IPv4 -> IPv6 path and collects the per-packet wall-clock timings.
inline XlatReport run_xlat(std::size_t n, const addrmap::AddressMapConfig& amap, std::uint64_t seed = 1,
                           std::size_t payload = 2, Ipv4Address client = Ipv4Address::parse("10.0.0.2")) {
    sim::EventQueue q;
    sim::SerialPipe to_sink(q);
    std::size_t frames = 0;
    SerialDeframer df;
    to_sink.set_receiver([&](ByteView b) { df.feed(b, [&](Bytes) { ++frames; }); });
    gateway::GatewayConfig gc;
    gc.amap = amap;
    gateway::Gateway gw(q, gc, to_sink, nullptr);

    std::mt19937_64 rng(seed);
    std::vector<Bytes> packets;
    packets.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Ipv4Packet p;
        p.src = client;
        p.dst = addrmap::mote_virtual4(static_cast<std::uint16_t>(1 + rng() % 7), amap);
        p.protocol = transport::kProtocol;
        p.ttl = 64;
        transport::Segment s;
        s.src_port = static_cast<std::uint16_t>(50000 + i % 10000);
        s.dst_port = transport::kCommandPort;
        s.seq = static_cast<std::uint32_t>(rng());
        s.ack = static_cast<std::uint32_t>(rng());
        s.flags = transport::kAck;
        s.payload.resize(payload);
        for (auto& b : s.payload) b = static_cast<std::uint8_t>(rng());
        p.payload = transport::encode_segment(s, transport::PseudoHeader::v4(p.src, p.dst));
        packets.push_back(encode_ipv4(p));
    }
    for (const auto& b : packets) gw.on_external(b);
    q.run_until(q.now() + std::chrono::seconds(1));

    XlatReport rep;
    rep.samples_us = gw.timing().snapshot();
    rep.timing = gateway::timing_report(rep.samples_us);
    rep.written_to_sink = frames;
    return rep;
}

}  // namespace meshgate::experiments
