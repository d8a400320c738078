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

/// @file config.hpp
/// @brief YAML configuration: scenario, middleware, serve and experiment
/// settings. A file may name a `base:` file (relative to itself) that is
/// applied first; the file then overrides only the keys it sets. Unknown keys
/// and out-of-range values are errors reported as `file:line:col: message`.

#include "meshgate/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <sstream>

namespace meshgate::config {

struct ServeConfig {
    /// Middleware HTTP API (host:port).
    std::string http_listen = "127.0.0.1:8080";
    /// When set, the gateway delivers to this middleware over HTTP instead of in-process.
    std::optional<std::string> middleware_url;
    /// Simulated seconds per wall-clock second.
    double speed = 1.0;
    Micros rule_period = std::chrono::seconds(1);
    Micros command_timeout = std::chrono::seconds(30);
};

struct ExperimentConfig {
    std::vector<std::uint16_t> counts{1, 2, 3, 4, 5, 6, 7};
    Micros duration = std::chrono::seconds(300);
    std::uint64_t seed = 42;
    std::size_t xlat_packets = 200;
    std::size_t xlat_payload = 2;
};

struct AppConfig {
    sim::ScenarioConfig scenario{};
    middleware::MiddlewareConfig middleware{};
    ServeConfig serve{};
    ExperimentConfig experiments{};
    std::vector<std::filesystem::path> sources;
};

namespace detail {

inline std::string where(const std::string& file, const YAML::Mark& m) {
    if (m.is_null()) return file;
    return file + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
}

[[noreturn]] inline void fail(const std::string& file, const YAML::Mark& m, const std::string& msg) {
    throw Error(Errc::config_error, where(file, m) + ": " + msg);
}

/// One YAML mapping; tracks which keys were consumed so leftovers can be reported.
class Section {
public:
    Section(YAML::Node node, std::string path, const std::string& file) : node_(node), path_(std::move(path)), file_(&file) {
        if (!node_.IsMap()) fail(*file_, node_.Mark(), (path_.empty() ? "document" : path_) + " must be a mapping");
    }

    bool has(const std::string& key) const { return static_cast<bool>(node_[key]); }

    YAML::Node raw(const std::string& key) {
        used_.insert(key);
        return node_[key];
    }

    template <typename T>
    bool get(const std::string& key, T& out) {
        used_.insert(key);
        const YAML::Node n = node_[key];
        if (!n) return false;
        if (!n.IsScalar()) fail(*file_, n.Mark(), name(key) + " must be a scalar");
        try {
            if constexpr (std::is_same_v<T, std::uint8_t>) {
                const auto v = n.as<unsigned>();
                if (v > 0xFF) fail(*file_, n.Mark(), name(key) + " must be <= 255");
                out = static_cast<std::uint8_t>(v);
            } else {
                out = n.as<T>();
            }
        } catch (const YAML::BadConversion&) {
            fail(*file_, n.Mark(), name(key) + ": cannot parse '" + n.Scalar() + "'");
        }
        return true;
    }

    template <typename T>
    bool get_range(const std::string& key, T& out, T lo, T hi) {
        T v{};
        if (!get(key, v)) return false;
        if (!(v >= lo && v <= hi)) {
            std::ostringstream os;
            os << name(key) << " must be in [" << +lo << ", " << +hi << "], got " << +v;
            fail(*file_, node_[key].Mark(), os.str());
        }
        out = v;
        return true;
    }

    /// Duration in the unit implied by the key suffix (_us, _ms, _s, _h).
    bool duration(const std::string& key, Micros& out, double lo_us = 0, bool allow_zero = true) {
        double v = 0;
        if (!get(key, v)) return false;
        double scale = 1;
        if (key.ends_with("_us")) {
            scale = 1;
        } else if (key.ends_with("_ms")) {
            scale = 1e3;
        } else if (key.ends_with("_s")) {
            scale = 1e6;
        } else if (key.ends_with("_h")) {
            scale = 3.6e9;
        }
        const double us = v * scale;
        if (!std::isfinite(us) || us < lo_us || (!allow_zero && us <= 0) || us > 1e15) {
            fail(*file_, node_[key].Mark(), name(key) + " out of range");
        }
        out = Micros(static_cast<long>(std::llround(us)));
        return true;
    }

    template <typename F>
    bool address(const std::string& key, F parse) {
        std::string s;
        if (!get(key, s)) return false;
        try {
            parse(s);
        } catch (const Error& e) {
            fail(*file_, node_[key].Mark(), name(key) + ": " + e.detail());
        }
        return true;
    }

    std::optional<Section> child(const std::string& key) {
        used_.insert(key);
        const YAML::Node n = node_[key];
        if (!n) return std::nullopt;
        return Section(n, name(key), *file_);
    }

    void finish() const {
        for (const auto& kv : node_) {
            const auto k = kv.first.as<std::string>();
            if (!used_.count(k)) fail(*file_, kv.first.Mark(), "unknown key '" + name(k) + "'");
        }
    }

    std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const std::string& file() const { return *file_; }
    YAML::Mark mark(const std::string& key) const { return node_[key] ? node_[key].Mark() : node_.Mark(); }

private:
    YAML::Node node_;
    std::string path_;
    const std::string* file_;
    std::set<std::string> used_;
};

inline sim::TopologyKind topology_kind(const std::string& s, const std::string& file, const YAML::Mark& m) {
    if (s == "line") return sim::TopologyKind::line;
    if (s == "star") return sim::TopologyKind::star;
    if (s == "random") return sim::TopologyKind::random;
    if (s == "explicit") return sim::TopologyKind::explicit_links;
    fail(file, m, "topology.kind must be one of line, star, random, explicit");
}

inline void apply_topology(Section& s, sim::ScenarioConfig& c) {
    std::string kind;
    if (s.get("kind", kind)) c.topology = topology_kind(kind, s.file(), s.mark("kind"));
    s.get_range<std::uint16_t>("motes", c.motes, 1, 1000);
    s.duration("link_latency_ms", c.link_latency, 1, false);
    s.get_range("link_loss", c.link_loss, 0.0, 1.0);
    s.get_range("extra_edge_prob", c.random_extra_edge_prob, 0.0, 1.0);
    if (auto links = s.raw("links"); links) {
        if (!links.IsSequence()) fail(s.file(), links.Mark(), "topology.links must be a list");
        c.links.clear();
        for (std::size_t i = 0; i < links.size(); ++i) {
            Section l(links[i], "topology.links[" + std::to_string(i) + "]", s.file());
            sim::LinkSpec spec;
            spec.latency = c.link_latency;
            spec.loss = c.link_loss;
            if (!l.has("a") || !l.has("b")) fail(s.file(), links[i].Mark(), "link needs 'a' and 'b'");
            l.get("a", spec.a);
            l.get("b", spec.b);
            if (spec.a == spec.b) fail(s.file(), links[i].Mark(), "link endpoints must differ");
            l.duration("latency_ms", spec.latency, 1, false);
            l.get_range("loss", spec.loss, 0.0, 1.0);
            l.finish();
            c.links.push_back(spec);
        }
    }
    s.finish();
}

inline void apply_mote(Section& s, sim::ScenarioConfig& c) {
    auto& m = c.mote;
    s.duration("period_ms", m.period, 1000, false);
    s.duration("sensing_start_ms", m.sensing_start);
    s.duration("period_jitter_ms", m.period_jitter);
    s.get("random_phase", c.random_phase);
    Micros spread{};
    if (s.duration("phase_spread_ms", spread)) c.phase_spread = spread;
    s.get_range<std::size_t>("queue_limit", m.queue_limit, 1, 1'000'000);
    s.duration("reconnect_delay_ms", m.reconnect_delay, 1, false);
    s.get_range<std::size_t>("batch", m.batch, 1, 3);
    s.get("epoch_ms", m.epoch_ms);
    if (auto apps = s.raw("appliances"); apps) {
        if (!apps.IsSequence() || apps.size() == 0) fail(s.file(), apps.Mark(), "mote.appliances must be a non-empty list");
        m.appliances.clear();
        std::set<std::uint8_t> ids;
        for (std::size_t i = 0; i < apps.size(); ++i) {
            Section a(apps[i], "mote.appliances[" + std::to_string(i) + "]", s.file());
            sim::ApplianceSpec spec;
            a.get("id", spec.id);
            a.get_range("base_watts", spec.base_watts, 0.0, 5000.0);
            a.get_range("noise_watts", spec.noise_watts, 0.0, 5000.0);
            a.get("initially_on", spec.initially_on);
            a.finish();
            if (!ids.insert(spec.id).second) fail(s.file(), apps[i].Mark(), "duplicate appliance id");
            m.appliances.push_back(spec);
        }
    }
    if (auto t = s.child("transport")) {
        t->duration("initial_rto_ms", m.timing.initial_rto, 1, false);
        t->duration("max_rto_ms", m.timing.max_rto, 1, false);
        t->get_range("max_syn_retries", m.timing.max_syn_retries, 0, 100);
        t->get_range("max_data_retries", m.timing.max_data_retries, 0, 100);
        t->finish();
        if (m.timing.max_rto < m.timing.initial_rto) fail(s.file(), s.mark("transport"), "max_rto_ms < initial_rto_ms");
    }
    s.finish();
}

inline void apply_aodv(Section& s, aodv::Config& a) {
    s.duration("active_route_lifetime_s", a.active_route_lifetime, 1, false);
    s.duration("rreq_record_lifetime_s", a.rreq_record_lifetime, 1, false);
    s.duration("discovery_timeout_ms", a.discovery_timeout, 1, false);
    s.get_range("rreq_retries", a.rreq_retries, 0, 100);
    s.get_range<std::uint8_t>("hop_limit", a.hop_limit, 2, 255);
    s.finish();
}

inline void apply_addrmap(Section& s, addrmap::AddressMapConfig& a) {
    s.address("mesh_prefix6", [&](const std::string& v) { a.mesh_prefix6 = Ipv6Address::parse(v); });
    s.address("pool_prefix4", [&](const std::string& v) { a.pool_prefix4 = Ipv4Address::parse(v); });
    s.address("gw_prefix6", [&](const std::string& v) { a.gw_prefix6 = Ipv6Address::parse(v); });
    s.address("gateway_ipv4", [&](const std::string& v) { a.gateway_ipv4 = Ipv4Address::parse(v); });
    s.finish();
    try {
        a.validate();
    } catch (const Error& e) {
        fail(s.file(), s.mark("mesh_prefix6"), "addrmap: " + e.detail());
    }
}

inline void apply_middleware(Section& s, middleware::MiddlewareConfig& m) {
    s.get("max_plausible_mw", m.max_plausible_mw);
    Micros us{};
    if (s.duration("clock_skew_s", us, 0)) m.clock_skew = std::chrono::duration_cast<std::chrono::milliseconds>(us);
    if (s.duration("retention_h", us, 1, false)) m.retention = std::chrono::duration_cast<std::chrono::milliseconds>(us);
    if (s.duration("link_stale_after_s", us, 1, false)) {
        m.link_stale_after = std::chrono::duration_cast<std::chrono::milliseconds>(us);
    }
    std::string path;
    if (s.get("store_path", path)) m.store_path = path.empty() ? std::nullopt : std::optional<std::filesystem::path>(path);
    if (auto rules = s.raw("rules"); rules) {
        if (!rules.IsSequence()) fail(s.file(), rules.Mark(), "middleware.rules must be a list");
        m.rules.clear();
        for (std::size_t i = 0; i < rules.size(); ++i) {
            Section r(rules[i], "middleware.rules[" + std::to_string(i) + "]", s.file());
            middleware::AutomationRule rule;
            if (!r.has("mote_id") || !r.has("threshold_watts")) {
                fail(s.file(), rules[i].Mark(), "rule needs mote_id and threshold_watts");
            }
            r.get("mote_id", rule.mote_id);
            rule.appliance_id = 1;
            r.get("appliance_id", rule.appliance_id);
            r.get_range("threshold_watts", rule.threshold_watts, 0.0, 1e6);
            r.get_range("sustain_seconds", rule.sustain_seconds, 0.0, 86400.0);
            std::string action = "turn_off";
            r.get("action", action);
            if (action != "turn_off") fail(s.file(), r.mark("action"), "only action turn_off is supported");
            r.finish();
            m.rules.push_back(rule);
        }
    }
    s.finish();
}

inline void apply_serve(Section& s, ServeConfig& v) {
    s.get("http_listen", v.http_listen);
    if (v.http_listen.find(':') == std::string::npos) fail(s.file(), s.mark("http_listen"), "http_listen must be host:port");
    std::string url;
    if (s.get("middleware_url", url)) v.middleware_url = url.empty() ? std::nullopt : std::optional<std::string>(url);
    s.get_range("speed", v.speed, 0.01, 1000.0);
    s.duration("rule_period_ms", v.rule_period, 1000, false);
    s.duration("command_timeout_ms", v.command_timeout, 1000, false);
    s.finish();
}

inline void apply_experiments(Section& s, ExperimentConfig& e) {
    if (auto counts = s.raw("counts"); counts) {
        if (!counts.IsSequence() || counts.size() == 0) fail(s.file(), counts.Mark(), "experiments.counts must be a non-empty list");
        e.counts.clear();
        for (const auto& n : counts) {
            unsigned v = 0;
            try {
                v = n.as<unsigned>();
            } catch (const YAML::BadConversion&) {
                fail(s.file(), n.Mark(), "experiments.counts entries must be integers");
            }
            if (v < 1 || v > 1000) fail(s.file(), n.Mark(), "experiments.counts entries must be in [1, 1000]");
            e.counts.push_back(static_cast<std::uint16_t>(v));
        }
    }
    s.duration("duration_s", e.duration, 1, false);
    s.get("seed", e.seed);
    s.get_range<std::size_t>("xlat_packets", e.xlat_packets, 2, 10'000'000);
    s.get_range<std::size_t>("xlat_payload", e.xlat_payload, 0, 64);
    s.finish();
}

inline void apply(const YAML::Node& root, AppConfig& cfg, const std::string& file) {
    Section s(root, "", file);
    s.raw("base");
    s.get("name", cfg.scenario.name);
    s.get("seed", cfg.scenario.seed);
    s.duration("duration_s", cfg.scenario.duration, 1, false);
    s.get("trace", cfg.scenario.trace);
    std::string dir;
    if (s.get("buffer_dir", dir)) {
        cfg.scenario.buffer_dir = dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(dir);
    }
    s.duration("serial_latency_ms", cfg.scenario.serial_latency, 1, false);
    s.duration("external_latency_us", cfg.scenario.external_latency, 1, false);
    s.address("client_ipv4", [&](const std::string& v) { cfg.scenario.client_ipv4 = Ipv4Address::parse(v); });
    if (auto t = s.child("topology")) apply_topology(*t, cfg.scenario);
    if (auto m = s.child("mote")) apply_mote(*m, cfg.scenario);
    if (auto a = s.child("aodv")) apply_aodv(*a, cfg.scenario.aodv);
    if (auto a = s.child("addrmap")) apply_addrmap(*a, cfg.scenario.amap);
    if (auto m = s.child("middleware")) apply_middleware(*m, cfg.middleware);
    if (auto v = s.child("serve")) apply_serve(*v, cfg.serve);
    if (auto e = s.child("experiments")) apply_experiments(*e, cfg.experiments);
    s.finish();
}

inline YAML::Node parse(const std::string& text, const std::string& file) {
    try {
        YAML::Node n = YAML::Load(text);
        if (n.IsNull()) return YAML::Node(YAML::NodeType::Map);
        return n;
    } catch (const YAML::ParserException& e) {
        fail(file, e.mark, e.msg);
    }
}

inline void load_into(const std::filesystem::path& path, AppConfig& cfg, int depth) {
    if (depth > 8) throw Error(Errc::config_error, path.string() + ": base chain too deep");
    std::ifstream in(path);
    if (!in) throw Error(Errc::config_error, path.string() + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    const auto file = path.string();
    const YAML::Node root = parse(ss.str(), file);
    if (!root.IsMap()) fail(file, root.Mark(), "document must be a mapping");
    if (const auto base = root["base"]) {
        if (!base.IsScalar()) fail(file, base.Mark(), "base must be a file name");
        load_into(path.parent_path() / base.as<std::string>(), cfg, depth + 1);
    }
    apply(root, cfg, file);
    cfg.sources.push_back(path);
}

}  // namespace detail

/// Cross-field checks that no single key can catch.
inline void validate(const AppConfig& cfg) {
    const std::string file = cfg.sources.empty() ? "<config>" : cfg.sources.back().string();
    try {
        cfg.scenario.validate();
    } catch (const Error& e) {
        throw Error(Errc::config_error, file + ": " + e.detail());
    }
    for (const auto& r : cfg.middleware.rules) {
        if (r.mote_id < 1 || r.mote_id > cfg.scenario.motes) {
            throw Error(Errc::config_error, file + ": rule mote_id " + std::to_string(r.mote_id) + " outside 1..motes");
        }
    }
    for (auto n : cfg.experiments.counts) {
        if (n > 1000) throw Error(Errc::config_error, file + ": experiment count above 1000");
    }
    cfg.middleware.amap.validate();
}

inline AppConfig load_file(const std::filesystem::path& path) {
    AppConfig cfg;
    detail::load_into(path, cfg, 0);
    cfg.middleware.amap = cfg.scenario.amap;
    validate(cfg);
    return cfg;
}

/// Parses a config document held in memory. `base:` is resolved against `dir`.
inline AppConfig load_string(const std::string& text, const std::string& name = "<string>",
                             const std::filesystem::path& dir = ".") {
    AppConfig cfg;
    const YAML::Node root = detail::parse(text, name);
    if (!root.IsMap()) detail::fail(name, root.Mark(), "document must be a mapping");
    if (const auto base = root["base"]) detail::load_into(dir / base.as<std::string>(), cfg, 1);
    detail::apply(root, cfg, name);
    cfg.sources.emplace_back(name);
    cfg.middleware.amap = cfg.scenario.amap;
    validate(cfg);
    return cfg;
}

}  // namespace meshgate::config
