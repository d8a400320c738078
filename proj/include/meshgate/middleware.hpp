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

/// @file middleware.hpp
/// @brief Reading store, ingest filter, queries, automation rules and the
/// command path. Transport-agnostic; the HTTP binding is in middleware_http.hpp.
///
/// The middleware never sees IPv6: motes are addressed by their virtual IPv4.

#include "meshgate/addrmap.hpp"
#include "meshgate/gateway.hpp"
#include "meshgate/reading.hpp"

#include <json.hpp>

#include <condition_variable>
#include <fstream>
#include <shared_mutex>

namespace meshgate::middleware {

using Json = nlohmann::json;

struct StoredSample {
    std::uint32_t seq = 0;
    std::uint64_t timestamp_ms = 0;
    std::uint32_t watts_mw = 0;
};

/// Per (mote, appliance) series ordered by seq, idempotent on (mote, seq).
/// Optional JSON-lines append log; the index is rebuilt from it on open.
class ReadingStore {
public:
    explicit ReadingStore(std::optional<std::filesystem::path> log = std::nullopt,
                          std::chrono::milliseconds retention = std::chrono::hours(24))
        : log_path_(std::move(log)), retention_(retention) {
        if (log_path_) load();
    }

    /// Returns false when (mote, seq) is already stored.
    bool insert(const SensorReading& r, std::uint64_t now_ms) {
        std::unique_lock lock(mu_);
        if (!insert_locked(r)) return false;
        if (log_path_) {
            std::ofstream out(*log_path_, std::ios::app);
            out << Json{{"mote_id", r.mote_id}, {"appliance_id", r.appliance_id}, {"seq", r.seq},
                        {"timestamp_ms", r.timestamp_ms}, {"watts_mw", r.watts_mw}}
                           .dump()
                << '\n';
        }
        prune_locked(now_ms);
        return true;
    }

    std::vector<std::uint16_t> motes() const {
        std::shared_lock lock(mu_);
        std::vector<std::uint16_t> out;
        for (const auto& [k, _] : series_) {
            if (out.empty() || out.back() != k.first) out.push_back(k.first);
        }
        return out;
    }

    std::vector<std::uint8_t> appliances(std::uint16_t mote) const {
        std::shared_lock lock(mu_);
        std::vector<std::uint8_t> out;
        for (auto it = series_.lower_bound({mote, 0}); it != series_.end() && it->first.first == mote; ++it) {
            out.push_back(it->first.second);
        }
        return out;
    }

    bool has_mote(std::uint16_t mote) const {
        std::shared_lock lock(mu_);
        auto it = series_.lower_bound({mote, 0});
        return it != series_.end() && it->first.first == mote;
    }

    /// Snapshot copy of one series.
    std::vector<StoredSample> series(std::uint16_t mote, std::uint8_t appliance) const {
        std::shared_lock lock(mu_);
        auto it = series_.find({mote, appliance});
        return it == series_.end() ? std::vector<StoredSample>{} : it->second;
    }

    std::optional<SensorReading> latest(std::uint16_t mote) const {
        std::shared_lock lock(mu_);
        std::optional<SensorReading> best;
        for (auto it = series_.lower_bound({mote, 0}); it != series_.end() && it->first.first == mote; ++it) {
            if (it->second.empty()) continue;
            const auto& s = it->second.back();
            if (!best || s.seq > best->seq) best = SensorReading{mote, it->first.second, s.seq, s.timestamp_ms, s.watts_mw};
        }
        return best;
    }

    /// Seqs stored for one mote, ascending.
    std::vector<std::uint32_t> seqs(std::uint16_t mote) const {
        std::shared_lock lock(mu_);
        auto it = seen_.find(mote);
        if (it == seen_.end()) return {};
        return {it->second.begin(), it->second.end()};
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        std::size_t n = 0;
        for (const auto& [_, s] : series_) n += s.size();
        return n;
    }

private:
    using Key = std::pair<std::uint16_t, std::uint8_t>;

    bool insert_locked(const SensorReading& r) {
        if (!seen_[r.mote_id].insert(r.seq).second) return false;
        auto& s = series_[{r.mote_id, r.appliance_id}];
        StoredSample x{r.seq, r.timestamp_ms, r.watts_mw};
        auto pos = std::upper_bound(s.begin(), s.end(), r.seq, [](std::uint32_t q, const StoredSample& e) { return q < e.seq; });
        s.insert(pos, x);
        return true;
    }

    void prune_locked(std::uint64_t now_ms) {
        const auto keep = static_cast<std::uint64_t>(retention_.count());
        if (now_ms <= keep) return;
        const std::uint64_t cutoff = now_ms - keep;
        for (auto& [_, s] : series_) {
            while (!s.empty() && s.front().timestamp_ms < cutoff) s.erase(s.begin());
        }
    }

    void load() {
        std::ifstream in(*log_path_);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                const auto j = Json::parse(line);
                insert_locked(SensorReading{j.at("mote_id").get<std::uint16_t>(), j.at("appliance_id").get<std::uint8_t>(),
                                            j.at("seq").get<std::uint32_t>(), j.at("timestamp_ms").get<std::uint64_t>(),
                                            j.at("watts_mw").get<std::uint32_t>()});
            } catch (const std::exception&) {
                // Torn last line from a crash: ignore.
            }
        }
    }

    std::optional<std::filesystem::path> log_path_;
    std::chrono::milliseconds retention_;
    mutable std::shared_mutex mu_;
    std::map<Key, std::vector<StoredSample>> series_;
    std::map<std::uint16_t, std::set<std::uint32_t>> seen_;
};

struct AutomationRule {
    std::uint16_t mote_id = 0;
    std::uint8_t appliance_id = 0;
    double threshold_watts = 0;
    double sustain_seconds = 0;
};

struct Response {
    int status = 200;
    Json body = Json::object();
};

/// Delivers a command to a mote's virtual IPv4 address and waits for the ack.
class CommandTransport {
public:
    virtual ~CommandTransport() = default;
    virtual gateway::CommandResult send(Ipv4Address virtual4, std::uint8_t appliance, std::uint8_t value) = 0;
};

struct MiddlewareConfig {
    addrmap::AddressMapConfig amap{};
    std::uint32_t max_plausible_mw = 5'000'000;
    std::chrono::milliseconds clock_skew = std::chrono::hours(1);
    std::chrono::milliseconds retention = std::chrono::hours(24);
    /// A mote is reported "up" while its latest reading is at most this old.
    std::chrono::milliseconds link_stale_after = std::chrono::seconds(10);
    std::optional<std::filesystem::path> store_path;
    std::vector<AutomationRule> rules;
};

class Middleware {
public:
    using Clock = std::function<std::uint64_t()>;

    static std::uint64_t wall_clock_ms() {
        return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                              std::chrono::system_clock::now().time_since_epoch())
                                              .count());
    }

    explicit Middleware(MiddlewareConfig cfg = {}, Clock clock = wall_clock_ms)
        : cfg_(std::move(cfg)), clock_(std::move(clock)), store_(cfg_.store_path, cfg_.retention) {
        rules_.reserve(cfg_.rules.size());
        for (const auto& r : cfg_.rules) rules_.push_back(RuleState{r, true, std::nullopt});
    }

    Middleware(const Middleware&) = delete;
    Middleware& operator=(const Middleware&) = delete;

    void set_command_transport(CommandTransport* t) { transport_ = t; }
    void set_buffer_status(std::function<Json()> f) { buffer_status_ = std::move(f); }

    const ReadingStore& store() const { return store_; }
    std::uint64_t now_ms() const { return clock_(); }

    /// POST /ingest. 200 accepted or duplicate, 400 malformed, 422 filtered.
    Response ingest_json(std::string_view body) {
        SensorReading r;
        try {
            const auto j = Json::parse(body);
            r.mote_id = checked<std::uint16_t>(j, "mote_id");
            r.appliance_id = checked<std::uint8_t>(j, "appliance_id");
            r.seq = checked<std::uint32_t>(j, "seq");
            r.timestamp_ms = checked<std::uint64_t>(j, "timestamp_ms");
            r.watts_mw = checked<std::uint32_t>(j, "watts_mw");
        } catch (const std::exception& e) {
            ++malformed_;
            return {400, {{"error", "malformed"}, {"detail", e.what()}}};
        }
        return ingest(r);
    }

    Response ingest(const SensorReading& r) {
        if (r.watts_mw > cfg_.max_plausible_mw) {
            ++filtered_;
            return {422, {{"error", "filtered"}, {"reason", "watts_mw above max_plausible"}}};
        }
        const std::uint64_t now = clock_();
        const auto skew = static_cast<std::uint64_t>(cfg_.clock_skew.count());
        const std::uint64_t diff = r.timestamp_ms > now ? r.timestamp_ms - now : now - r.timestamp_ms;
        if (diff > skew) {
            ++filtered_;
            return {422, {{"error", "filtered"}, {"reason", "timestamp outside server clock window"}}};
        }
        const bool fresh = store_.insert(r, now);
        if (fresh) {
            ++accepted_;
            publish(r);
        } else {
            ++duplicates_;
        }
        return {200, {{"status", fresh ? "accepted" : "duplicate"}}};
    }

    /// GET /motes
    Json motes() const {
        Json out = Json::array();
        const auto now = clock_();
        for (auto m : store_.motes()) {
            Json apps = Json::array();
            for (auto a : store_.appliances(m)) {
                auto s = store_.series(m, a);
                Json relay = nullptr;
                {
                    std::lock_guard lock(relay_mu_);
                    auto it = relays_.find({m, a});
                    if (it != relays_.end()) relay = it->second ? "on" : "off";
                }
                apps.push_back({{"appliance_id", a},
                                {"relay", relay},
                                {"latest_watts", s.empty() ? Json(nullptr) : Json(s.back().watts_mw / 1000.0)}});
            }
            const auto latest = store_.latest(m);
            const bool up = latest && latest->timestamp_ms + static_cast<std::uint64_t>(cfg_.link_stale_after.count()) >= now;
            out.push_back({{"mote_id", m},
                           {"virtual_ipv4", addrmap::mote_virtual4(m, cfg_.amap).to_string()},
                           {"appliances", apps},
                           {"link_status", up ? "up" : "stale"}});
        }
        return out;
    }

    /// GET /motes/{id}/latest
    Response latest(std::uint16_t mote) const {
        auto r = store_.latest(mote);
        if (!r) return {404, {{"error", "unknown mote"}}};
        return {200, reading_json(*r)};
    }

    /// GET /motes/{id}/readings?window_s=N. Series plus mean watts per appliance.
    Response readings(std::uint16_t mote, std::uint64_t window_s) const {
        if (!store_.has_mote(mote)) return {404, {{"error", "unknown mote"}}};
        const auto now = clock_();
        const std::uint64_t from = window_s * 1000 >= now ? 0 : now - window_s * 1000;
        Json series = Json::object();
        Json aggregates = Json::object();
        for (auto a : store_.appliances(mote)) {
            Json pts = Json::array();
            double sum = 0;
            std::size_t n = 0;
            for (const auto& s : store_.series(mote, a)) {
                if (s.timestamp_ms < from || s.timestamp_ms > now) continue;
                pts.push_back({{"seq", s.seq}, {"timestamp_ms", s.timestamp_ms}, {"watts", s.watts_mw / 1000.0}});
                sum += s.watts_mw / 1000.0;
                ++n;
            }
            const auto key = std::to_string(a);
            series[key] = pts;
            aggregates[key] = {{"count", n}, {"mean_watts", n ? Json(sum / static_cast<double>(n)) : Json(nullptr)}};
        }
        return {200, {{"mote_id", mote}, {"window_s", window_s}, {"series", series}, {"aggregates", aggregates}}};
    }

    /// POST /motes/{id}/appliances/{aid}/command
    Response send_command(std::uint16_t mote, std::uint8_t appliance, int value) {
        if (value != 0 && value != 1) return {400, {{"error", "value must be 0 or 1"}}};
        if (!transport_) return {503, {{"error", "no command transport"}}};
        const auto v4 = addrmap::mote_virtual4(mote, cfg_.amap);
        const auto res = transport_->send(v4, appliance, static_cast<std::uint8_t>(value));
        const double rtt_ms = std::chrono::duration<double, std::milli>(res.rtt).count();
        Json body{{"mote_id", mote}, {"appliance_id", appliance}, {"value", value}, {"virtual_ipv4", v4.to_string()}};
        switch (res.status) {
            case gateway::CommandResult::Status::ok: {
                std::lock_guard lock(relay_mu_);
                relays_[{mote, appliance}] = value == 1;
                body["ack"] = res.ack;
                body["rtt_ms"] = rtt_ms;
                return {200, body};
            }
            case gateway::CommandResult::Status::rejected:
                body["ack"] = res.ack;
                body["rtt_ms"] = rtt_ms;
                body["error"] = "mote rejected command";
                return {502, body};
            case gateway::CommandResult::Status::timeout:
                body["error"] = "command timed out";
                return {504, body};
        }
        return {500, body};
    }

    /// Runs every rule once. Returns the number of commands issued.
    std::size_t evaluate_rules() {
        std::size_t issued = 0;
        for (auto& rs : rules_) {
            const auto s = store_.series(rs.rule.mote_id, rs.rule.appliance_id);
            if (s.empty()) continue;
            const double thr_mw = rs.rule.threshold_watts * 1000.0;
            if (s.back().watts_mw <= thr_mw) {
                rs.armed = true;
                continue;
            }
            if (!rs.armed) continue;
            // Start of the current above-threshold run.
            auto it = s.end();
            while (it != s.begin() && std::prev(it)->watts_mw > thr_mw) --it;
            const double sustained_s = static_cast<double>(s.back().timestamp_ms - it->timestamp_ms) / 1000.0;
            if (sustained_s < rs.rule.sustain_seconds) continue;
            ++issued;
            const auto resp = send_command(rs.rule.mote_id, rs.rule.appliance_id, 0);
            rs.last_status = resp.status;
            if (resp.status == 200) rs.armed = false;
        }
        return issued;
    }

    /// GET /buffer/status
    Json buffer_status() const {
        if (buffer_status_) return buffer_status_();
        return {{"buffer_depth", nullptr}, {"middleware_link", "unknown"}};
    }

    /// Blocking event feed for GET /events. Each subscriber gets every reading
    /// published after it subscribed.
    class Subscription {
    public:
        /// Waits up to `timeout` for the next event.
        std::optional<Json> next(std::chrono::milliseconds timeout) {
            std::unique_lock lock(mu_);
            cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
            if (queue_.empty()) return std::nullopt;
            Json j = std::move(queue_.front());
            queue_.pop_front();
            return j;
        }

    private:
        friend class Middleware;
        void push(const Json& j) {
            {
                std::lock_guard lock(mu_);
                if (queue_.size() >= 1024) queue_.pop_front();
                queue_.push_back(j);
            }
            cv_.notify_one();
        }
        void close() {
            {
                std::lock_guard lock(mu_);
                closed_ = true;
            }
            cv_.notify_all();
        }
        std::mutex mu_;
        std::condition_variable cv_;
        std::deque<Json> queue_;
        bool closed_ = false;
    };

    std::shared_ptr<Subscription> subscribe() {
        auto s = std::make_shared<Subscription>();
        std::lock_guard lock(sub_mu_);
        subs_.push_back(s);
        return s;
    }

    void close_subscriptions() {
        std::lock_guard lock(sub_mu_);
        for (auto& w : subs_) {
            if (auto s = w.lock()) s->close();
        }
        subs_.clear();
    }

    std::size_t accepted() const { return accepted_; }
    std::size_t duplicates() const { return duplicates_; }
    std::size_t filtered() const { return filtered_; }
    std::size_t malformed() const { return malformed_; }

    static Json reading_json(const SensorReading& r) {
        return {{"mote_id", r.mote_id}, {"appliance_id", r.appliance_id}, {"seq", r.seq},
                {"timestamp_ms", r.timestamp_ms}, {"watts_mw", r.watts_mw}, {"watts", r.watts()}};
    }

private:
    struct RuleState {
        AutomationRule rule;
        bool armed = true;
        std::optional<int> last_status;
    };

    template <typename T>
    static T checked(const Json& j, const char* key) {
        const auto& v = j.at(key);
        if (!v.is_number_integer()) throw std::invalid_argument(std::string(key) + " must be an integer");
        if (v.is_number_unsigned()) {
            const auto u = v.get<std::uint64_t>();
            if (u > std::numeric_limits<T>::max()) throw std::out_of_range(std::string(key) + " out of range");
            return static_cast<T>(u);
        }
        const auto s = v.get<std::int64_t>();
        if (s < 0 || static_cast<std::uint64_t>(s) > std::numeric_limits<T>::max()) {
            throw std::out_of_range(std::string(key) + " out of range");
        }
        return static_cast<T>(s);
    }

    void publish(const SensorReading& r) {
        const Json j = reading_json(r);
        std::lock_guard lock(sub_mu_);
        for (auto it = subs_.begin(); it != subs_.end();) {
            if (auto s = it->lock()) {
                s->push(j);
                ++it;
            } else {
                it = subs_.erase(it);
            }
        }
    }

    MiddlewareConfig cfg_;
    Clock clock_;
    ReadingStore store_;
    CommandTransport* transport_ = nullptr;
    std::function<Json()> buffer_status_;
    std::vector<RuleState> rules_;
    mutable std::mutex relay_mu_;
    std::map<std::pair<std::uint16_t, std::uint8_t>, bool> relays_;
    std::mutex sub_mu_;
    std::vector<std::weak_ptr<Subscription>> subs_;
    std::atomic<std::size_t> accepted_{0};
    std::atomic<std::size_t> duplicates_{0};
    std::atomic<std::size_t> filtered_{0};
    std::atomic<std::size_t> malformed_{0};
};

/// In-process delivery with a scriptable up/down switch, for simulations and tests.
class DirectLink : public gateway::MiddlewareLink {
public:
    explicit DirectLink(Middleware& mw) : mw_(&mw) {}

    void set_up(bool up) { up_ = up; }
    bool up() const { return up_; }

    gateway::Delivery deliver(const SensorReading& r) override {
        if (!up_) return gateway::Delivery::failed;
        ++attempts_;
        const auto res = mw_->ingest(r);
        return res.status == 200 ? gateway::Delivery::ok : gateway::Delivery::rejected;
    }

    std::size_t attempts() const { return attempts_; }

private:
    Middleware* mw_;
    std::atomic<bool> up_{true};
    std::size_t attempts_ = 0;
};

}  // namespace meshgate::middleware
