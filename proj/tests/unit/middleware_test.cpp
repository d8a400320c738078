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

#include "meshgate/middleware_http.hpp"
#include "meshgate/scenario.hpp"
#include "test_util.hpp"

using namespace meshgate;
using namespace meshgate::middleware;
using namespace std::chrono_literals;

namespace {

constexpr std::uint64_t kNow = 1'700'000'000'000ULL;

struct FakeClock {
    std::uint64_t ms = kNow;
    Middleware::Clock fn() {
        return [this] { return ms; };
    }
};

SensorReading at(std::uint16_t mote, std::uint32_t seq, std::uint64_t ts, double watts, std::uint8_t aid = 1) {
    return SensorReading{mote, aid, seq, ts, static_cast<std::uint32_t>(std::lround(watts * 1000))};
}

std::string body(std::uint16_t mote, std::uint32_t seq, std::uint64_t ts, std::uint64_t mw) {
    return Json{{"mote_id", mote}, {"appliance_id", 1}, {"seq", seq}, {"timestamp_ms", ts}, {"watts_mw", mw}}.dump();
}

struct FakeTransport : CommandTransport {
    gateway::CommandResult send(Ipv4Address v4, std::uint8_t appliance, std::uint8_t value) override {
        calls.push_back({v4, appliance, value});
        return next;
    }
    struct Call {
        Ipv4Address v4;
        std::uint8_t appliance;
        std::uint8_t value;
    };
    std::vector<Call> calls;
    gateway::CommandResult next{gateway::CommandResult::Status::ok, kAckOk, 12ms};
};

}  // namespace

TEST(Middleware, IngestAcceptsAndDeduplicates) {
    FakeClock clk;
    Middleware mw({}, clk.fn());
    auto r = mw.ingest_json(body(3, 1, kNow, 100000));
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body["status"], "accepted");
    EXPECT_EQ(mw.latest(3).body["seq"], 1);
    r = mw.ingest_json(body(3, 1, kNow, 5));
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body["status"], "duplicate");
    EXPECT_EQ(mw.store().size(), 1u);
    EXPECT_EQ(mw.latest(3).body["watts_mw"], 100000);
}

TEST(Middleware, IngestFiltersAndRejects) {
    FakeClock clk;
    Middleware mw({}, clk.fn());
    EXPECT_EQ(mw.ingest_json(body(1, 1, kNow, 1'000'000'000)).status, 422);
    EXPECT_EQ(mw.ingest_json(body(1, 2, kNow + 2 * 3600 * 1000, 1)).status, 422);
    EXPECT_EQ(mw.ingest_json(body(1, 3, kNow - 2 * 3600 * 1000, 1)).status, 422);
    EXPECT_EQ(mw.ingest_json(body(1, 4, kNow + 59 * 60 * 1000, 1)).status, 200);
    EXPECT_EQ(mw.ingest_json("{not json").status, 400);
    EXPECT_EQ(mw.ingest_json(R"({"mote_id":1,"appliance_id":1,"seq":5,"timestamp_ms":1})").status, 400);
    EXPECT_EQ(mw.ingest_json(R"({"mote_id":"1","appliance_id":1,"seq":5,"timestamp_ms":1,"watts_mw":1})").status, 400);
    EXPECT_EQ(mw.ingest_json(R"({"mote_id":70000,"appliance_id":1,"seq":5,"timestamp_ms":1,"watts_mw":1})").status, 400);
    EXPECT_EQ(mw.ingest_json(R"({"mote_id":-1,"appliance_id":1,"seq":5,"timestamp_ms":1,"watts_mw":1})").status, 400);
    EXPECT_EQ(mw.filtered(), 3u);
    EXPECT_EQ(mw.malformed(), 5u);
    EXPECT_EQ(mw.store().size(), 1u);
}

TEST(Middleware, EmptyStoreIs404) {
    Middleware mw;
    EXPECT_EQ(mw.latest(1).status, 404);
    EXPECT_EQ(mw.readings(1, 60).status, 404);
    EXPECT_TRUE(mw.motes().empty());
}

TEST(Middleware, ConstantSeriesMean) {
    FakeClock clk;
    Middleware mw({}, clk.fn());
    for (std::uint32_t i = 0; i < 60; ++i) mw.ingest(at(2, i + 1, kNow - 59'000 + i * 1000, 100.0));
    const auto r = mw.readings(2, 60);
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body["aggregates"]["1"]["count"], 60);
    EXPECT_DOUBLE_EQ(r.body["aggregates"]["1"]["mean_watts"].get<double>(), 100.0);
    EXPECT_EQ(r.body["series"]["1"].size(), 60u);
}

TEST(Middleware, AggregatesMatchBruteForce) {
    FakeClock clk;
    Middleware mw({}, clk.fn());
    std::mt19937_64 rng(11);
    struct Raw {
        std::uint64_t ts;
        std::uint32_t mw;
        std::uint8_t aid;
    };
    std::vector<Raw> raw;
    std::uint32_t seq = 0;
    for (int i = 0; i < 600; ++i) {
        const std::uint8_t aid = static_cast<std::uint8_t>(1 + rng() % 2);
        const bool on = (i / 37) % 2 == 0;
        const double w = on ? 50.0 + static_cast<double>(rng() % 100000) / 1000.0 : 0.0;
        const auto r = at(5, ++seq, kNow - 600'000 + static_cast<std::uint64_t>(i) * 1000, w, aid);
        raw.push_back({r.timestamp_ms, r.watts_mw, aid});
        mw.ingest(r);
        // Replays must not change anything.
        if (rng() % 4 == 0) mw.ingest(r);
    }
    for (std::uint64_t window : {1ULL, 30ULL, 120ULL, 599ULL, 3600ULL}) {
        const auto res = mw.readings(5, window);
        for (std::uint8_t aid : {1, 2}) {
            double sum = 0;
            std::size_t n = 0;
            for (const auto& x : raw) {
                if (x.aid == aid && x.ts + window * 1000 >= kNow) {
                    sum += x.mw / 1000.0;
                    ++n;
                }
            }
            const auto& agg = res.body["aggregates"][std::to_string(aid)];
            EXPECT_EQ(agg["count"], n) << window;
            if (n) {
                EXPECT_NEAR(agg["mean_watts"].get<double>(), sum / static_cast<double>(n), 1e-9) << window;
            }
        }
    }
}

TEST(Middleware, SeriesOrderedBySeqDespiteArrivalOrder) {
    FakeClock clk;
    Middleware mw({}, clk.fn());
    for (std::uint32_t s : {5u, 1u, 3u, 2u, 4u}) mw.ingest(at(1, s, kNow - 10'000 + s, 10.0));
    const auto seqs = mw.store().seqs(1);
    EXPECT_EQ(seqs, (std::vector<std::uint32_t>{1, 2, 3, 4, 5}));
    EXPECT_EQ(mw.latest(1).body["seq"], 5);
}

TEST(Middleware, StorePersistsAndPrunes) {
    testutil::TempDir dir;
    FakeClock clk;
    MiddlewareConfig cfg;
    cfg.store_path = dir.path() / "store.jsonl";
    cfg.retention = std::chrono::minutes(10);
    {
        Middleware mw(cfg, clk.fn());
        for (std::uint32_t i = 1; i <= 20; ++i) mw.ingest(at(1, i, kNow - 20 * 60'000 + i * 60'000, 1.0));
        EXPECT_LE(mw.store().size(), 11u);
    }
    {
        std::ofstream f(*cfg.store_path, std::ios::app);
        f << "{\"mote_id\": 1, \"trunc";
    }
    Middleware again(cfg, clk.fn());
    EXPECT_EQ(again.latest(1).body["seq"], 20);
    EXPECT_EQ(again.ingest(at(1, 20, kNow, 1.0)).body["status"], "duplicate");
}

TEST(Middleware, MotesListing) {
    FakeClock clk;
    Middleware mw({}, clk.fn());
    FakeTransport t;
    mw.set_command_transport(&t);
    mw.ingest(at(3, 1, kNow, 40.0));
    mw.ingest(at(4, 1, kNow - 60'000, 40.0));
    ASSERT_EQ(mw.send_command(3, 1, 0).status, 200);
    const auto m = mw.motes();
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[0]["mote_id"], 3);
    EXPECT_EQ(m[0]["virtual_ipv4"], "10.77.0.3");
    EXPECT_EQ(m[0]["link_status"], "up");
    EXPECT_EQ(m[0]["appliances"][0]["relay"], "off");
    EXPECT_EQ(m[1]["link_status"], "stale");
    EXPECT_TRUE(m[1]["appliances"][0]["relay"].is_null());
}

TEST(Middleware, CommandStatusMapping) {
    Middleware mw;
    EXPECT_EQ(mw.send_command(3, 1, 1).status, 503);
    FakeTransport t;
    mw.set_command_transport(&t);
    EXPECT_EQ(mw.send_command(3, 1, 2).status, 400);
    EXPECT_TRUE(t.calls.empty());
    auto r = mw.send_command(3, 1, 1);
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body["ack"], kAckOk);
    EXPECT_DOUBLE_EQ(r.body["rtt_ms"].get<double>(), 12.0);
    ASSERT_EQ(t.calls.size(), 1u);
    EXPECT_EQ(t.calls[0].v4.to_string(), "10.77.0.3");
    t.next = {gateway::CommandResult::Status::rejected, kAckFail, 3ms};
    EXPECT_EQ(mw.send_command(3, 1, 1).status, 502);
    t.next = {};
    EXPECT_EQ(mw.send_command(3, 1, 1).status, 504);
}

TEST(Middleware, RuleFiresOncePerExcursion) {
    FakeClock clk;
    MiddlewareConfig cfg;
    cfg.rules = {AutomationRule{1, 1, 100.0, 5.0}};
    Middleware mw(cfg, clk.fn());
    FakeTransport t;
    mw.set_command_transport(&t);
    std::uint32_t seq = 0;
    auto feed = [&](double w, int secs) {
        for (int i = 0; i < secs; ++i) {
            clk.ms += 1000;
            mw.ingest(at(1, ++seq, clk.ms, w));
            mw.evaluate_rules();
        }
    };
    feed(99.0, 30);
    EXPECT_TRUE(t.calls.empty());
    feed(110.0, 4);  // shorter than sustain_seconds
    feed(90.0, 2);
    EXPECT_TRUE(t.calls.empty());
    feed(110.0, 20);
    ASSERT_EQ(t.calls.size(), 1u);
    EXPECT_EQ(t.calls[0].value, 0);
    feed(50.0, 3);
    feed(110.0, 20);
    EXPECT_EQ(t.calls.size(), 2u);
}

TEST(Middleware, RuleRetriesAfterFailedCommand) {
    FakeClock clk;
    MiddlewareConfig cfg;
    cfg.rules = {AutomationRule{1, 1, 10.0, 2.0}};
    Middleware mw(cfg, clk.fn());
    FakeTransport t;
    t.next = {};
    mw.set_command_transport(&t);
    for (std::uint32_t s = 1; s <= 4; ++s) {
        clk.ms += 1000;
        mw.ingest(at(1, s, clk.ms, 20.0));
    }
    EXPECT_EQ(mw.evaluate_rules(), 1u);
    EXPECT_EQ(mw.evaluate_rules(), 1u);
    t.next = {gateway::CommandResult::Status::ok, kAckOk, 1ms};
    EXPECT_EQ(mw.evaluate_rules(), 1u);
    EXPECT_EQ(mw.evaluate_rules(), 0u);
    EXPECT_EQ(t.calls.size(), 3u);
}

TEST(Middleware, SubscribersSeeNewReadings) {
    FakeClock clk;
    Middleware mw({}, clk.fn());
    auto sub = mw.subscribe();
    mw.ingest(at(1, 1, kNow, 1.0));
    mw.ingest(at(1, 1, kNow, 1.0));
    auto ev = sub->next(10ms);
    ASSERT_TRUE(ev);
    EXPECT_EQ((*ev)["seq"], 1);
    EXPECT_FALSE(sub->next(10ms));
}

TEST(MiddlewareHttp, Endpoints) {
    Middleware mw;
    FakeTransport t;
    mw.set_command_transport(&t);
    mw.set_buffer_status([] { return Json{{"buffer_depth", 4}, {"middleware_link", "up"}}; });
    HttpServer server(mw);
    const int port = server.start("127.0.0.1", 0);
    httplib::Client c("127.0.0.1", port);
    const auto now = Middleware::wall_clock_ms();

    auto r = c.Post("/ingest", body(3, 1, now, 42000), "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    r = c.Post("/ingest", "nope", "application/json");
    EXPECT_EQ(r->status, 400);
    r = c.Post("/ingest", body(3, 2, now, 1'000'000'000), "application/json");
    EXPECT_EQ(r->status, 422);

    r = c.Get("/motes");
    EXPECT_EQ(Json::parse(r->body)[0]["virtual_ipv4"], "10.77.0.3");
    r = c.Get("/motes/3/latest");
    EXPECT_EQ(Json::parse(r->body)["watts_mw"], 42000);
    EXPECT_EQ(c.Get("/motes/9/latest")->status, 404);
    r = c.Get("/motes/3/readings?window_s=60");
    EXPECT_EQ(Json::parse(r->body)["aggregates"]["1"]["count"], 1);
    EXPECT_EQ(c.Get("/motes/3/readings?window_s=x")->status, 400);

    r = c.Post("/motes/3/appliances/1/command", R"({"value": 2})", "application/json");
    EXPECT_EQ(r->status, 400);
    r = c.Post("/motes/3/appliances/1/command", R"({"value": 0})", "application/json");
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(Json::parse(r->body)["ack"], kAckOk);
    EXPECT_EQ(t.calls.size(), 1u);

    r = c.Get("/buffer/status");
    EXPECT_EQ(Json::parse(r->body)["buffer_depth"], 4);
    EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST(MiddlewareHttp, EventStream) {
    Middleware mw;
    HttpServer server(mw);
    const int port = server.start("127.0.0.1", 0);
    std::string got;
    std::thread reader([&] {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(5, 0);
        c.Get("/events", [&](const char* data, std::size_t n) {
            got.append(data, n);
            return got.find("data: ") == std::string::npos;
        });
    });
    const auto now = Middleware::wall_clock_ms();
    for (int i = 0; i < 50 && got.find("data: ") == std::string::npos; ++i) {
        mw.ingest(at(7, static_cast<std::uint32_t>(i + 1), now, 3.0));
        std::this_thread::sleep_for(20ms);
    }
    reader.join();
    EXPECT_NE(got.find("event: reading"), std::string::npos);
    EXPECT_NE(got.find("\"mote_id\":7"), std::string::npos);
}

TEST(MiddlewareHttp, HttpLinkDelivery) {
    Middleware mw;
    auto server = std::make_unique<HttpServer>(mw);
    const int port = server->start("127.0.0.1", 0);
    HttpLink link("http://127.0.0.1:" + std::to_string(port), 500ms);
    const auto now = Middleware::wall_clock_ms();
    EXPECT_EQ(link.deliver(at(1, 1, now, 5.0)), gateway::Delivery::ok);
    EXPECT_EQ(link.deliver(at(1, 1, now, 5.0)), gateway::Delivery::ok);
    EXPECT_EQ(link.deliver(at(1, 2, now, 1e7)), gateway::Delivery::rejected);
    server.reset();
    EXPECT_EQ(link.deliver(at(1, 3, now, 5.0)), gateway::Delivery::failed);
    EXPECT_EQ(mw.store().size(), 1u);
}

TEST(MiddlewareSim, CommandThroughSimulatedMesh) {
    sim::ScenarioConfig cfg;
    cfg.motes = 3;
    cfg.random_phase = false;
    cfg.mote.appliances = {sim::ApplianceSpec{1, 100.0, 0.0, true}};
    MiddlewareConfig mc;
    std::unique_ptr<sim::World> world;
    Middleware mw(mc, [&] { return world->epoch_now_ms(); });
    DirectLink link(mw);
    world = std::make_unique<sim::World>(cfg, &link);
    sim::SimCommandTransport transport(*world);
    mw.set_command_transport(&transport);

    world->run_until(SimTime(5s + 500ms));
    EXPECT_EQ(mw.latest(3).body["watts_mw"], 100000);
    const auto r = mw.send_command(3, 1, 0);
    ASSERT_EQ(r.status, 200);
    EXPECT_GT(r.body["rtt_ms"].get<double>(), 0.0);
    const auto seq_at_cmd = mw.latest(3).body["seq"].get<std::uint32_t>();
    world->run_for(5s);
    const auto series = mw.store().series(3, 1);
    for (const auto& s : series) {
        if (s.seq > seq_at_cmd + 2) {
            EXPECT_EQ(s.watts_mw, 0u) << s.seq;
        }
    }
    EXPECT_EQ(mw.send_command(3, 7, 1).status, 502);
    EXPECT_EQ(mw.motes()[2]["appliances"][0]["relay"], "off");
}
