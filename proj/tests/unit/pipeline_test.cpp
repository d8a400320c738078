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

#include <gtest/gtest.h>

#include <fstream>

#include "meshgate/middleware.hpp"
#include "meshgate/scenario.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace meshgate;
using namespace std::chrono_literals;

namespace {

SensorReading reading(std::uint16_t mote, std::uint32_t seq, std::uint32_t mw = 100000) {
    return SensorReading{mote, 1, seq, 1000ULL * seq, mw};
}

/// Records everything the gateway hands upstream; can be switched off.
struct RecordingLink : gateway::MiddlewareLink {
    gateway::Delivery deliver(const SensorReading& r) override {
        if (!up) return gateway::Delivery::failed;
        got.push_back(r);
        return gateway::Delivery::ok;
    }
    bool up = true;
    std::vector<SensorReading> got;
};

sim::ScenarioConfig small(std::uint16_t motes, sim::TopologyKind topo = sim::TopologyKind::star) {
    sim::ScenarioConfig c;
    c.motes = motes;
    c.topology = topo;
    c.seed = 7;
    c.random_phase = false;
    c.mote.appliances = {sim::ApplianceSpec{1, 100.0, 0.0, true}};
    return c;
}

}  // namespace

TEST(Reading, RoundTripAndStream) {
    const SensorReading r{3, 2, 77, 1234567890123ULL, 4242};
    const Bytes b = encode_reading(r);
    ASSERT_EQ(b.size(), kReadingSize);
    EXPECT_EQ(decode_reading(b), r);
    EXPECT_THROW(decode_reading(ByteView(b).first(18)), Error);

    Bytes two = b;
    encode_reading(reading(1, 1), two);
    ReadingStream s;
    EXPECT_TRUE(s.feed(ByteView(two).first(10)).empty());
    const auto out = s.feed(ByteView(two).subspan(10));
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[1].seq, 1u);
    EXPECT_EQ(s.buffered(), 0u);
}

TEST(DurableBuffer, DedupAndPop) {
    gateway::DurableBuffer b;
    EXPECT_TRUE(b.append(reading(1, 1)));
    EXPECT_TRUE(b.append(reading(1, 2)));
    EXPECT_FALSE(b.append(reading(1, 2)));
    EXPECT_FALSE(b.append(reading(1, 1)));
    EXPECT_TRUE(b.append(reading(2, 1)));
    EXPECT_EQ(b.size(), 3u);
    EXPECT_EQ(b.duplicates(), 2u);
    b.pop(2);
    EXPECT_EQ(b.front().mote_id, 2);
    // Popped readings stay deduplicated.
    EXPECT_FALSE(b.append(reading(1, 2)));
}

TEST(DurableBuffer, SurvivesRestart) {
    testutil::TempDir dir;
    {
        gateway::DurableBuffer b(dir.path());
        for (std::uint32_t s = 1; s <= 10; ++s) b.append(reading(4, s));
        b.pop(6);
    }
    gateway::DurableBuffer b(dir.path());
    ASSERT_EQ(b.size(), 4u);
    EXPECT_EQ(b.front().seq, 7u);
    EXPECT_EQ(b.hwm(4), 10u);
    EXPECT_FALSE(b.append(reading(4, 3)));
    EXPECT_TRUE(b.append(reading(4, 11)));
}

TEST(DurableBuffer, TornTailIsCut) {
    testutil::TempDir dir;
    {
        gateway::DurableBuffer b(dir.path());
        b.append(reading(1, 1));
        b.append(reading(1, 2));
    }
    const auto log = dir.path() / "buffer.log";
    const auto full = std::filesystem::file_size(log);
    std::filesystem::resize_file(log, full - 5);
    gateway::DurableBuffer b(dir.path());
    EXPECT_EQ(b.size(), 1u);
    EXPECT_GT(b.torn_bytes_dropped(), 0u);
    EXPECT_TRUE(b.append(reading(1, 2)));
    gateway::DurableBuffer again(dir.path());
    EXPECT_EQ(again.size(), 2u);
}

TEST(DurableBuffer, CompactionKeepsHighWaterMarks) {
    testutil::TempDir dir;
    {
        gateway::DurableBuffer b(dir.path());
        for (std::uint32_t s = 1; s <= 3000; ++s) {
            b.append(reading(static_cast<std::uint16_t>(s % 5), s));
            b.pop(1);
        }
        EXPECT_GE(b.compactions(), 1u);
        EXPECT_LT(b.log_bytes(), gateway::DurableBuffer::kCompactThreshold);
    }
    gateway::DurableBuffer b(dir.path());
    EXPECT_TRUE(b.empty());
    EXPECT_EQ(b.hwm(0), 3000u);
    EXPECT_FALSE(b.append(reading(0, 2995)));
}

TEST(TimingReport, ConstantHasZeroJitter) {
    const auto r = gateway::timing_report(std::vector<double>(50, 42.0));
    EXPECT_DOUBLE_EQ(r.mean_us, 42.0);
    EXPECT_DOUBLE_EQ(r.jitter_us, 0.0);
    EXPECT_THROW(gateway::timing_report({1.0}), Error);
}

TEST(TimingReport, NormalSamplesMatchOracle) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> d(100.0, 30.0);
    std::vector<double> xs;
    for (int i = 0; i < 5000; ++i) xs.push_back(std::max(1.0, d(rng)));
    const auto r = gateway::timing_report(xs);
    EXPECT_NEAR(r.mean_us, 100.0, 5.0);
    EXPECT_NEAR(r.mean_us, oracle::mean(xs), 1e-9);
    EXPECT_NEAR(r.jitter_us, oracle::stddev(xs), 1e-9);
    std::size_t total = 0;
    for (auto c : r.bins) total += c;
    EXPECT_EQ(total, xs.size());
    const auto j = gateway::to_json(r);
    EXPECT_TRUE(j.contains("mean_us") && j.contains("jitter_us") && j.contains("bins"));
    const auto csv = gateway::timing_csv(xs);
    EXPECT_EQ(csv.rfind("packet_index,micros\n", 0), 0u);
}

TEST(Sink, TunnelIsTransparentBothWays) {
    sim::EventQueue q;
    sim::Network net(q, 1);
    addrmap::AddressMapConfig amap;
    sim::Sink sink(net, amap);
    sim::SerialPipe up(q), down(q);
    sink.attach(up, down);
    std::vector<Bytes> seen;
    SerialDeframer df;
    up.set_receiver([&](ByteView b) { df.feed(b, [&](Bytes p) { seen.push_back(std::move(p)); }); });

    std::mt19937 rng(5);
    std::vector<Ipv6Packet> sent;
    for (int i = 0; i < 50; ++i) {
        auto p = testutil::random_ipv6(rng, static_cast<std::size_t>(rng() % 300));
        p.dst = addrmap::host4_to_virtual6(Ipv4Address{static_cast<std::uint32_t>(rng())}, amap);
        sent.push_back(p);
        sink.mesh_to_serial(p);
    }
    q.run_until(SimTime(1s));
    ASSERT_EQ(seen.size(), sent.size());
    for (std::size_t i = 0; i < sent.size(); ++i) EXPECT_EQ(decode_ipv6(seen[i]), sent[i]);

    Ipv6Packet empty;
    empty.dst = addrmap::host4_to_virtual6(Ipv4Address::parse("192.0.2.1"), amap);
    sink.mesh_to_serial(empty);
    q.run_until(SimTime(2s));
    EXPECT_EQ(seen.back().size(), 40u);
}

TEST(Sink, SerialDownCrcAndForeignAreCounted) {
    sim::EventQueue q;
    sim::Network net(q, 1);
    addrmap::AddressMapConfig amap;
    sim::Sink sink(net, amap);
    sim::SerialPipe up(q), down(q);
    sink.attach(up, down);

    Ipv6Packet p;
    p.dst = addrmap::host4_to_virtual6(Ipv4Address::parse("192.0.2.1"), amap);
    up.set_up(false);
    sink.mesh_to_serial(p);
    EXPECT_EQ(sink.serial_down_drops(), 1u);

    Bytes frame = encode_serial_frame(encode_ipv6(p));
    frame[5] ^= 0x01;
    sink.on_serial_bytes(frame);
    EXPECT_EQ(sink.crc_errors(), 1u);
    EXPECT_EQ(sink.to_mesh(), 0u);

    sink.on_serial_bytes(encode_serial_frame(encode_ipv6(p)));
    EXPECT_EQ(sink.not_for_mesh(), 1u);
    EXPECT_EQ(net.frames_sent(), 0u);
}

TEST(Mote, SixtyReadingsGapFree) {
    RecordingLink link;
    sim::World w(small(1), &link);
    w.run_until(SimTime(60s + 500ms));
    ASSERT_EQ(link.got.size(), 60u);
    for (std::uint32_t i = 0; i < 60; ++i) {
        EXPECT_EQ(link.got[i].seq, i + 1);
        EXPECT_EQ(link.got[i].mote_id, 1);
        EXPECT_EQ(link.got[i].watts_mw, 100000u);
    }
}

TEST(Mote, CommandFlipsRelayAndIsIdempotent) {
    RecordingLink link;
    sim::World w(small(3, sim::TopologyKind::line), &link);
    w.run_until(SimTime(5s));
    auto r = w.command(3, 1, 0);
    ASSERT_EQ(r.status, gateway::CommandResult::Status::ok);
    EXPECT_EQ(r.ack, kAckOk);
    EXPECT_GT(r.rtt, Micros::zero());
    EXPECT_EQ(w.mote(3).relay(1), false);
    r = w.command(3, 1, 0);
    EXPECT_EQ(r.status, gateway::CommandResult::Status::ok);
    EXPECT_EQ(w.mote(3).relay(1), false);
    EXPECT_EQ(w.mote(3).commands_applied(), 2u);

    const auto flipped_at = w.now();
    w.run_for(5s);
    std::size_t late_nonzero = 0;
    for (const auto& x : link.got) {
        if (x.mote_id == 3 && x.timestamp_ms > static_cast<std::uint64_t>(flipped_at.count() / 1000) + 2000) {
            late_nonzero += x.watts_mw != 0;
        }
    }
    EXPECT_EQ(late_nonzero, 0u);

    r = w.command(3, 9, 1);
    EXPECT_EQ(r.status, gateway::CommandResult::Status::rejected);
    EXPECT_EQ(r.ack, kAckFail);
    EXPECT_EQ(w.mote(3).commands_rejected(), 1u);
}

TEST(Mote, PartitionedCommandTimesOut) {
    auto cfg = small(2, sim::TopologyKind::explicit_links);
    cfg.links = {sim::LinkSpec{0, 1}};
    sim::World w(cfg);
    w.run_until(SimTime(3s));
    const auto r = w.command(2, 1, 0, 10s);
    EXPECT_EQ(r.status, gateway::CommandResult::Status::timeout);
    EXPECT_EQ(w.client().open_requests(), 0u);
}

TEST(Gateway, MalformedPacketIsCountedAndPumpContinues) {
    RecordingLink link;
    sim::World w(small(1), &link);
    w.gateway().on_external(Bytes{0x45, 0x00, 0x01});
    w.gateway().on_serial_bytes(encode_serial_frame(Bytes{1, 2, 3}));
    EXPECT_GE(w.gateway().errors(Errc::truncated) + w.gateway().errors(Errc::malformed_dispatch) +
                  w.gateway().errors(Errc::length_mismatch),
              2u);
    w.run_until(SimTime(10s + 500ms));
    EXPECT_EQ(link.got.size(), 10u);
}

TEST(Gateway, OutageBuffersThenFlushesInOrder) {
    RecordingLink link;
    sim::World w(small(1), &link);
    w.run_until(SimTime(5s + 500ms));
    link.up = false;
    w.run_until(SimTime(35s + 500ms));
    EXPECT_FALSE(w.gateway().middleware_up());
    EXPECT_GE(w.gateway().buffer().size(), 29u);
    link.up = true;
    w.run_until(SimTime(40s + 500ms));
    EXPECT_TRUE(w.gateway().buffer().empty());
    ASSERT_EQ(link.got.size(), 40u);
    for (std::uint32_t i = 0; i < 40; ++i) EXPECT_EQ(link.got[i].seq, i + 1);
    EXPECT_EQ(w.gateway().status()["buffer_depth"], 0);
}

TEST(Gateway, RestartRecoversDurableBuffer) {
    testutil::TempDir dir;
    RecordingLink link;
    auto cfg = small(2, sim::TopologyKind::line);
    cfg.buffer_dir = dir.path();
    sim::World w(cfg, &link);
    w.run_until(SimTime(10s + 500ms));
    link.up = false;
    w.run_until(SimTime(20s + 500ms));
    w.restart_gateway();
    w.run_until(SimTime(30s + 500ms));
    link.up = true;
    w.run_until(SimTime(45s));
    std::set<std::pair<int, std::uint32_t>> keys;
    for (const auto& r : link.got) EXPECT_TRUE(keys.insert({r.mote_id, r.seq}).second);
    for (std::uint16_t m = 1; m <= 2; ++m) {
        for (std::uint32_t s = 1; s <= 40; ++s) EXPECT_TRUE(keys.count({m, s})) << m << ":" << s;
    }
    EXPECT_TRUE(w.gateway().buffer().empty());
}

TEST(World, SingleMoteDelayMatchesClosedForm) {
    auto cfg = small(1);
    cfg.mote.batch = 1;
    sim::World w(cfg);
    w.run_until(SimTime(20s));
    ASSERT_GE(w.probe().samples.size(), 15u);
    // One reading = 16-byte transport header + 19 bytes, in a compressed
    // 6LoWPAN datagram inside one link frame.
    Ipv6Packet p;
    p.src = addrmap::mote_address(1, cfg.amap);
    p.dst = addrmap::host4_to_virtual6(cfg.amap.gateway_ipv4, cfg.amap);
    p.next_header = transport::kProtocol;
    p.payload.assign(transport::kHeaderSize + kReadingSize, 0);
    sixlowpan::TagAllocator tags;
    const auto frames = sixlowpan::adapt(p, cfg.amap.mesh_prefix6, kLinkPayloadMax, tags);
    ASSERT_EQ(frames.size(), 1u);
    const Micros expect = sim::airtime(frames[0].size() + kLinkHeaderSize) + cfg.link_latency + cfg.serial_latency;
    for (const auto& s : w.probe().samples) EXPECT_EQ(s.delay(), expect) << s.seq;
}

TEST(World, SameSeedSameTrace) {
    auto run = [] {
        auto cfg = small(4, sim::TopologyKind::random);
        cfg.random_phase = true;
        sim::World w(cfg);
        w.run_until(SimTime(15s));
        std::ostringstream os;
        w.trace().write(os);
        return os.str();
    };
    const auto a = run();
    EXPECT_GT(a.size(), 1000u);
    EXPECT_EQ(a, run());
}

TEST(World, RandomTopologyIsConnected) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto cfg = small(9, sim::TopologyKind::random);
        cfg.seed = seed;
        std::map<int, std::set<int>> adj;
        for (const auto& l : sim::build_links(cfg)) {
            adj[l.a].insert(l.b);
            adj[l.b].insert(l.a);
        }
        EXPECT_EQ(oracle::bfs(adj, 0).size(), 10u);
    }
}
