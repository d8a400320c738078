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

#include "meshgate/mesh_sim.hpp"

using namespace meshgate;
using namespace meshgate::sim;
using namespace std::chrono_literals;

namespace {

struct Recorder : FrameHandler {
    std::vector<std::pair<SimTime, LinkFrame>> got;
    std::vector<LinkFrame> failed;
    EventQueue* q = nullptr;
    void on_frame(const LinkFrame& f) override { got.emplace_back(q->now(), f); }
    void on_link_failure(const LinkFrame& f) override { failed.push_back(f); }
};

LinkFrame frame_of(std::size_t payload, NodeId dst, FrameType t = FrameType::data) {
    LinkFrame f;
    f.dst_short = dst;
    f.frame_type = t;
    f.payload.assign(payload, 0xAB);
    return f;
}

}  // namespace

TEST(EventQueue, EqualTimesFireInInsertionOrder) {
    EventQueue q;
    std::vector<int> order;
    for (int i = 0; i < 10; ++i) q.schedule(5ms, [&, i] { order.push_back(i); });
    q.schedule(1ms, [&] { order.push_back(-1); });
    q.run_until(10ms);
    EXPECT_EQ(order, (std::vector<int>{-1, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
    EXPECT_EQ(q.now(), 10ms);
}

TEST(EventQueue, RunUntilNowOnEmptyIsNoop) {
    EventQueue q;
    q.run_until(q.now());
    EXPECT_EQ(q.now(), 0us);
    EXPECT_EQ(q.fired(), 0u);
}

TEST(EventQueue, PastScheduleRejected) {
    EventQueue q;
    q.run_until(1s);
    EXPECT_THROW(q.schedule(500ms, [] {}), std::logic_error);
}

TEST(EventQueue, EventsScheduledDuringRunFireOnce) {
    EventQueue q;
    int n = 0;
    std::function<void()> tick = [&] {
        if (++n < 5) q.schedule_in(1ms, tick);
    };
    q.schedule(0us, tick);
    q.run_until(1s);
    EXPECT_EQ(n, 5);
}

TEST(Topology, RejectsBadLinks) {
    Topology t;
    EXPECT_THROW(t.add_link(1, 1, {}), Error);
    EXPECT_THROW(t.add_link(1, 2, {0us, 0.0}), Error);
    EXPECT_THROW(t.add_link(1, 2, {1ms, 1.5}), Error);
    t.add_link(1, 2, {1ms, 0.0});
    EXPECT_TRUE(t.neighbors(2).count(1));
    EXPECT_NE(t.link(2, 1), nullptr);
}

TEST(Channel, IdleFullFrameDeliveryTime) {
    Topology t;
    t.add_link(1, 2, {2ms, 0.0});
    Channel ch(t);
    auto r = ch.transmit(1, 2, kLinkMtu, 100ms, [] { return 0.5; });
    ASSERT_EQ(r.deliveries.size(), 1u);
    EXPECT_EQ(r.deliveries[0].at, 100ms + 2ms + 127 * 32us);
}

TEST(Channel, LossOneAlwaysDrops) {
    Topology t;
    t.add_link(1, 2, {1ms, 1.0});
    Channel ch(t);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) {
        auto r = ch.transmit(1, 2, 50, SimTime(i * 10ms), [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; });
        EXPECT_TRUE(r.deliveries.empty());
        EXPECT_EQ(r.drops, 1u);
    }
}

TEST(Channel, NeighborDefersByAirtime) {
    // 1 - 2 - 3: 1 and 3 both neighbor 2; 1 and 2 are mutually adjacent.
    Topology t;
    t.add_link(1, 2, {1ms, 0.0});
    t.add_link(2, 3, {1ms, 0.0});
    Channel ch(t);
    auto zero = [] { return 0.5; };
    auto a = ch.transmit(1, 2, 100, 0us, zero);
    auto b = ch.transmit(2, 3, 60, 0us, zero);
    EXPECT_EQ(a.start, 0us);
    EXPECT_EQ(b.start, 100 * 32us);
    EXPECT_EQ(b.deliveries[0].at - a.deliveries[0].at, 60 * 32us);
    EXPECT_EQ(ch.total_wait(), 100 * 32us);
}

TEST(Channel, UnknownLinkThrows) {
    Topology t;
    t.add_link(1, 2, {1ms, 0.0});
    Channel ch(t);
    try {
        ch.transmit(1, 3, 10, 0us, [] { return 0.5; });
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::no_such_link);
    }
}

TEST(Channel, MeanWaitNondecreasingWithLoad) {
    // Star with 6 leaves; offered load = number of leaves transmitting each slot.
    Micros prev{-1};
    for (int senders = 1; senders <= 6; ++senders) {
        Topology t;
        for (NodeId n = 1; n <= 6; ++n) t.add_link(0, n, {1ms, 0.0});
        Channel ch(t);
        for (int slot = 0; slot < 50; ++slot) {
            for (NodeId n = 1; n <= senders; ++n) ch.transmit(n, 0, 60, SimTime(slot * 100ms), [] { return 0.5; });
        }
        EXPECT_GE(ch.mean_wait(), prev);
        prev = ch.mean_wait();
    }
}

TEST(Network, ConservationAndControlPriority) {
    EventQueue q;
    Network net(q, 9);
    Recorder r0, r1, r2;
    for (auto* r : {&r0, &r1, &r2}) r->q = &q;
    net.attach(0, &r0);
    net.attach(1, &r1);
    net.attach(2, &r2);
    net.topology().add_link(0, 1, {1ms, 0.3});
    net.topology().add_link(0, 2, {1ms, 0.3});
    for (int i = 0; i < 200; ++i) net.enqueue(0, frame_of(40, kBroadcastShort), Priority::data);
    q.run_until(10s);
    EXPECT_EQ(net.frames_sent(), 200u);
    EXPECT_EQ(net.frames_delivered() + net.frames_dropped(), 400u);
    EXPECT_EQ(r1.got.size() + r2.got.size(), net.frames_delivered());

    // Control queued after data still goes out first (behind the frame already on air).
    r1.got.clear();
    net.topology().mutable_link(0, 1)->loss_prob = 0.0;
    net.enqueue(0, frame_of(10, 1), Priority::data);
    net.enqueue(0, frame_of(10, 1), Priority::data);
    net.enqueue(0, frame_of(10, 1, FrameType::aodv_control), Priority::control);
    q.run_until(20s);
    ASSERT_EQ(r1.got.size(), 3u);
    EXPECT_EQ(r1.got[0].second.frame_type, FrameType::data);
    EXPECT_EQ(r1.got[1].second.frame_type, FrameType::aodv_control);
}

TEST(Network, RemovedLinkReportsFailure) {
    EventQueue q;
    Network net(q, 1);
    Recorder r0, r1;
    r0.q = r1.q = &q;
    net.attach(0, &r0);
    net.attach(1, &r1);
    net.topology().add_link(0, 1, {1ms, 0.0});
    net.topology().remove_link(0, 1);
    net.enqueue(0, frame_of(10, 1), Priority::data);
    q.run_until(1s);
    EXPECT_EQ(r0.failed.size(), 1u);
    EXPECT_TRUE(r1.got.empty());
}

TEST(Network, SameSeedSameTrace) {
    auto run = [](std::uint64_t seed) {
        EventQueue q;
        Trace trace;
        Network net(q, seed, &trace);
        Recorder r[4];
        for (NodeId n = 0; n < 4; ++n) {
            r[n].q = &q;
            net.attach(n, &r[n]);
        }
        net.topology().add_link(0, 1, {2ms, 0.2});
        net.topology().add_link(1, 2, {3ms, 0.2});
        net.topology().add_link(2, 3, {1ms, 0.2});
        net.topology().add_link(0, 3, {5ms, 0.2});
        for (int i = 0; i < 100; ++i) {
            q.schedule(SimTime(i * 7ms), [&net, i] {
                net.enqueue(static_cast<NodeId>(i % 4), frame_of(20 + i % 50, kBroadcastShort), Priority::data);
            });
        }
        q.run_until(5s);
        return trace.lines();
    };
    EXPECT_EQ(run(42), run(42));
    EXPECT_NE(run(42), run(43));
}

TEST(Timer, OnlyLatestArmFires) {
    EventQueue q;
    int fired = 0;
    Timer t(q, [&] { ++fired; });
    t.arm(5ms);
    t.arm(2ms);
    t.arm(9ms);  // later than pending: ignored
    q.run_until(20ms);
    EXPECT_EQ(fired, 1);
    t.arm(30ms);
    t.cancel();
    q.run_until(40ms);
    EXPECT_EQ(fired, 1);
}
