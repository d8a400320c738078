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

// meshgate: scenario runner, live gateway/middleware server and experiment harness.
//
// Exit status: 0 ok, 1 runtime failure, 2 configuration or usage error.

#include "meshgate/config.hpp"
#include "meshgate/experiments.hpp"
#include "meshgate/live.hpp"
#include "meshgate/plot.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

using namespace meshgate;
namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Source {
    std::string config;
    std::string scenario;
};

void add_source(CLI::App* app, Source& s) {
    auto* c = app->add_option("--config", s.config, "Config file (default: $MESHGATE_CONFIG)");
    app->add_option("--scenario", s.scenario, "Shipped preset name, e.g. line7 (configs/NAME.yaml)")->excludes(c);
}

/// Resolves a preset name to configs/NAME.yaml under the working directory,
/// then under the source tree.
fs::path find_scenario(const std::string& name) {
    if (name.find('/') != std::string::npos || fs::path(name).extension() == ".yaml") return name;
    std::vector<fs::path> tried{fs::path("configs") / (name + ".yaml")};
#ifdef MESHGATE_SOURCE_DIR
    tried.push_back(fs::path(MESHGATE_SOURCE_DIR) / "configs" / (name + ".yaml"));
#endif
    for (const auto& p : tried) {
        if (fs::exists(p)) return p;
    }
    throw Error(Errc::config_error, "no scenario named '" + name + "' (looked for " + tried.front().string() + ")");
}

config::AppConfig load(const Source& s, const std::string& fallback_scenario = "defaults") {
    if (!s.config.empty()) return config::load_file(s.config);
    if (!s.scenario.empty()) return config::load_file(find_scenario(s.scenario));
    if (const char* env = std::getenv("MESHGATE_CONFIG"); env && *env) return config::load_file(env);
    return config::load_file(find_scenario(fallback_scenario));
}

std::vector<std::uint16_t> parse_counts(const std::string& s) {
    std::vector<std::uint16_t> out;
    auto num = [&](const std::string& t) {
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(t, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != t.size() || v < 1 || v > 1000) throw Error(Errc::config_error, "bad mote count '" + t + "'");
        return static_cast<std::uint16_t>(v);
    };
    if (const auto dots = s.find(".."); dots != std::string::npos) {
        const auto a = num(s.substr(0, dots));
        const auto b = num(s.substr(dots + 2));
        if (b < a) throw Error(Errc::config_error, "empty count range '" + s + "'");
        for (auto n = a; n <= b; ++n) out.push_back(n);
        return out;
    }
    std::stringstream ss(s);
    std::string t;
    while (std::getline(ss, t, ',')) out.push_back(num(t));
    if (out.empty()) throw Error(Errc::config_error, "no mote counts given");
    return out;
}

Micros seconds(double s) {
    if (!(s >= 0) || !std::isfinite(s)) throw Error(Errc::config_error, "duration must be a non-negative number");
    return Micros(static_cast<long>(std::llround(s * 1e6)));
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    f << text;
    if (!f) throw Error(Errc::io_error, "cannot write " + p.string());
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw Error(Errc::io_error, "cannot read " + p.string());
    return nlohmann::json::parse(f);
}

// ---- sim -------------------------------------------------------------------

struct SimArgs {
    Source src;
    std::optional<std::uint64_t> seed;
    std::optional<double> duration_s;
    std::optional<int> motes;
    std::string trace;
    std::string summary;
    std::string buffer;
    std::vector<std::string> outages;
    std::vector<double> restarts;
    std::vector<std::string> commands;
};

struct Action {
    SimTime at;
    enum Kind { link_down, link_up, restart, command } kind;
    std::uint16_t mote = 0;
    std::uint8_t appliance = 0;
    std::uint8_t value = 0;
};

std::vector<double> split_numbers(const std::string& s, std::size_t n, const char* what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string t;
    while (std::getline(ss, t, ':')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(t, &used));
            if (used != t.size()) throw std::invalid_argument(t);
        } catch (const std::exception&) {
            throw Error(Errc::config_error, std::string("bad ") + what + " '" + s + "'");
        }
    }
    if (out.size() != n) throw Error(Errc::config_error, std::string("bad ") + what + " '" + s + "'");
    return out;
}

int run_sim(const SimArgs& a) {
    auto cfg = load(a.src);
    if (a.seed) cfg.scenario.seed = *a.seed;
    if (a.duration_s) cfg.scenario.duration = seconds(*a.duration_s);
    if (a.motes) cfg.scenario.motes = *a.motes;
    if (!a.buffer.empty()) cfg.scenario.buffer_dir = a.buffer;
    cfg.scenario.trace = !a.trace.empty();
    config::validate(cfg);
    if (cfg.scenario.buffer_dir && fs::exists(*cfg.scenario.buffer_dir) && !fs::is_empty(*cfg.scenario.buffer_dir)) {
        std::cerr << "note: buffer directory " << cfg.scenario.buffer_dir->string()
                  << " is not empty; buffered readings from a previous run will be delivered\n";
    }

    std::vector<Action> actions;
    for (const auto& o : a.outages) {
        const auto v = split_numbers(o, 2, "--outage START:SECONDS");
        actions.push_back({SimTime(seconds(v[0])), Action::link_down});
        actions.push_back({SimTime(seconds(v[0] + v[1])), Action::link_up});
    }
    for (double r : a.restarts) actions.push_back({SimTime(seconds(r)), Action::restart});
    for (const auto& c : a.commands) {
        const auto v = split_numbers(c, 4, "--command T:MOTE:APPLIANCE:VALUE");
        if (v[1] < 1 || v[1] > cfg.scenario.motes || v[2] < 0 || v[2] > 255 || (v[3] != 0 && v[3] != 1)) {
            throw Error(Errc::config_error, "bad --command '" + c + "'");
        }
        actions.push_back({SimTime(seconds(v[0])), Action::command, static_cast<std::uint16_t>(v[1]),
                           static_cast<std::uint8_t>(v[2]), static_cast<std::uint8_t>(v[3])});
    }
    std::stable_sort(actions.begin(), actions.end(), [](const Action& x, const Action& y) { return x.at < y.at; });

    sim::World* wp = nullptr;
    middleware::Middleware mw(cfg.middleware, [&wp] { return wp ? wp->epoch_now_ms() : 0; });
    middleware::DirectLink link(mw);
    sim::World w(cfg.scenario, &link);
    wp = &w;
    sim::SimCommandTransport transport(w, cfg.serve.command_timeout);
    mw.set_command_transport(&transport);

    nlohmann::json commands = nlohmann::json::array();
    const SimTime end(cfg.scenario.duration);
    const Micros rule_period = cfg.serve.rule_period;
    SimTime next_rule(rule_period);
    std::size_t ai = 0;
    while (w.now() < end) {
        SimTime t = std::min(end, next_rule);
        if (ai < actions.size()) t = std::min(t, actions[ai].at);
        w.run_until(t);
        for (; ai < actions.size() && actions[ai].at <= w.now(); ++ai) {
            const auto& act = actions[ai];
            switch (act.kind) {
                case Action::link_down:
                    w.trace().record(w.now(), "mw_outage", {{"up", false}});
                    link.set_up(false);
                    break;
                case Action::link_up:
                    w.trace().record(w.now(), "mw_outage", {{"up", true}});
                    link.set_up(true);
                    w.gateway().flush();
                    break;
                case Action::restart:
                    w.restart_gateway();
                    break;
                case Action::command: {
                    const auto r = mw.send_command(act.mote, act.appliance, act.value);
                    auto j = r.body;
                    j["status"] = r.status;
                    j["at_s"] = static_cast<double>(act.at.count()) / 1e6;
                    commands.push_back(j);
                    break;
                }
            }
        }
        if (w.now() >= next_rule) {
            if (!cfg.middleware.rules.empty()) mw.evaluate_rules();
            next_rule = next_rule + rule_period;
        }
    }

    nlohmann::json motes = nlohmann::json::object();
    bool gap_free = true;
    for (std::uint16_t m = 1; m <= cfg.scenario.motes; ++m) {
        const auto seqs = mw.store().seqs(m);
        std::size_t gaps = 0;
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            if (seqs[i] != i + 1) {
                ++gaps;
                break;
            }
        }
        gap_free = gap_free && gaps == 0;
        motes[std::to_string(m)] = {{"stored", seqs.size()},
                                    {"last_seq", seqs.empty() ? 0u : seqs.back()},
                                    {"gap_free", gaps == 0}};
    }
    nlohmann::json errors = nlohmann::json::object();
    for (const auto& [e, n] : w.gateway().error_counts()) errors[std::string(to_string(e))] = n;
    nlohmann::json summary{{"scenario", cfg.scenario.name},
                           {"seed", cfg.scenario.seed},
                           {"topology", sim::to_string(cfg.scenario.topology)},
                           {"motes", cfg.scenario.motes},
                           {"sim_time_s", static_cast<double>(w.now().count()) / 1e6},
                           {"readings_received_by_gateway", w.probe().samples.size()},
                           {"readings_stored", mw.store().size()},
                           {"gap_free", gap_free},
                           {"per_mote", motes},
                           {"gateway", w.gateway().status()},
                           {"gateway_errors", errors},
                           {"commands", commands}};
    if (!a.trace.empty()) {
        std::ostringstream os;
        w.trace().write(os);
        write_file(a.trace, os.str());
    }
    if (!a.summary.empty()) write_file(a.summary, summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

// ---- serve -----------------------------------------------------------------

struct ServeArgs {
    Source src;
    std::string serial;
    std::string listen;
    std::string middleware;
    std::string buffer;
    std::string http;
    std::optional<double> speed;
    std::optional<std::uint64_t> seed;
    double run_for_s = 0;
};

std::pair<std::string, int> host_port(const std::string& s) {
    const auto c = s.rfind(':');
    if (c == std::string::npos) throw Error(Errc::config_error, "expected HOST:PORT, got '" + s + "'");
    int port = -1;
    try {
        port = std::stoi(s.substr(c + 1));
    } catch (const std::exception&) {
    }
    if (port < 0 || port > 65535) throw Error(Errc::config_error, "bad port in '" + s + "'");
    return {s.substr(0, c), port};
}

int run_serve(const ServeArgs& a) {
    // The mesh, the sink's serial tunnel and the gateway's external side all
    // live inside this process.
    for (const auto& [flag, v] : {std::pair{"--serial", a.serial}, std::pair{"--listen", a.listen}}) {
        if (!v.empty() && v != "sim") {
            throw Error(Errc::config_error, std::string(flag) + " supports only 'sim' (the in-process simulated mesh)");
        }
    }
    auto cfg = load(a.src);
    if (a.seed) cfg.scenario.seed = *a.seed;
    if (!a.buffer.empty()) cfg.scenario.buffer_dir = a.buffer;
    if (!a.middleware.empty()) cfg.serve.middleware_url = a.middleware;
    if (!a.http.empty()) cfg.serve.http_listen = a.http;
    if (a.speed) cfg.serve.speed = *a.speed;
    config::validate(cfg);
    const auto [host, port] = host_port(cfg.serve.http_listen);

    live::LiveOptions opt;
    opt.speed = cfg.serve.speed;
    opt.rule_period = std::chrono::duration_cast<std::chrono::milliseconds>(cfg.serve.rule_period);
    opt.command_timeout = cfg.serve.command_timeout;
    opt.middleware_url = cfg.serve.middleware_url;

    sigset_t sigs;
    sigemptyset(&sigs);
    sigaddset(&sigs, SIGINT);
    sigaddset(&sigs, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

    live::LiveRuntime rt(cfg.scenario, cfg.middleware, opt);
    middleware::HttpServer http(rt.middleware());
    const int bound = http.start(host, port);
    rt.start();
    std::cout << "meshgate serving " << cfg.scenario.motes << " motes (" << sim::to_string(cfg.scenario.topology)
              << ") on http://" << host << ":" << bound << std::endl;

    const auto t0 = std::chrono::steady_clock::now();
    for (;;) {
        timespec ts{0, 200'000'000};
        const int sig = sigtimedwait(&sigs, nullptr, &ts);
        if (sig == SIGINT || sig == SIGTERM) break;
        if (a.run_for_s > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= a.run_for_s) {
            break;
        }
    }
    std::cout << "shutting down" << std::endl;
    http.stop();
    rt.stop();
    return 0;
}

// ---- experiments -----------------------------------------------------------

struct TrafficArgs {
    Source src;
    std::string counts;
    std::optional<double> duration_s;
    std::optional<std::uint64_t> seed;
    std::string out = "results";
};

int run_traffic(const TrafficArgs& a) {
    const auto cfg = load(a.src, "traffic");
    const auto counts = a.counts.empty() ? cfg.experiments.counts : parse_counts(a.counts);
    const Micros duration = a.duration_s ? seconds(*a.duration_s) : cfg.experiments.duration;
    const std::uint64_t seed = a.seed.value_or(cfg.experiments.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = experiments::run_traffic(cfg.scenario, counts, duration, seed);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto j = rep.to_json();
    j["scenario"] = cfg.scenario.name;
    const fs::path out(a.out);
    write_file(out / "traffic.json", j.dump(2) + "\n");
    write_file(out / "traffic_summary.csv", rep.summary_csv());
    write_file(out / "traffic_samples.csv", rep.samples_csv());
    std::cout << rep.summary_csv();
    std::cerr << "wrote " << (out / "traffic.json").string() << " in " << wall << " s\n";
    return 0;
}

struct XlatArgs {
    Source src;
    std::optional<std::size_t> packets;
    std::optional<std::size_t> payload;
    std::uint64_t seed = 1;
    std::string out = "results";
};

int run_xlat(const XlatArgs& a) {
    const auto cfg = load(a.src);
    const std::size_t n = a.packets.value_or(cfg.experiments.xlat_packets);
    if (n < 2) throw Error(Errc::config_error, "--packets must be at least 2");
    const auto rep = experiments::run_xlat(n, cfg.scenario.amap, a.seed, a.payload.value_or(cfg.experiments.xlat_payload),
                                           cfg.scenario.client_ipv4);
    const fs::path out(a.out);
    write_file(out / "xlat.json", rep.to_json().dump(2) + "\n");
    write_file(out / "xlat_samples.csv", gateway::timing_csv(rep.samples_us));
    std::cout << "packets " << rep.timing.count << "  mean_us " << rep.timing.mean_us << "  jitter_us "
              << rep.timing.jitter_us << "\n";
    return 0;
}

// ---- plot / validate -------------------------------------------------------

int run_plot(const std::string& in, std::string out) {
    if (out.empty()) out = in;
    std::size_t n = 0;
    if (fs::exists(fs::path(in) / "traffic.json")) {
        write_file(fs::path(out) / "delay_jitter.svg", plot::traffic_svg(read_json(fs::path(in) / "traffic.json")));
        std::cout << "wrote " << (fs::path(out) / "delay_jitter.svg").string() << "\n";
        ++n;
    }
    if (fs::exists(fs::path(in) / "xlat.json")) {
        write_file(fs::path(out) / "xlat_histogram.svg", plot::xlat_svg(read_json(fs::path(in) / "xlat.json")));
        std::cout << "wrote " << (fs::path(out) / "xlat_histogram.svg").string() << "\n";
        ++n;
    }
    if (n == 0) throw Error(Errc::io_error, "no traffic.json or xlat.json in " + in);
    return 0;
}

int run_validate(const Source& src, const std::vector<std::string>& files) {
    if (files.empty()) {
        const auto cfg = load(src);
        std::cout << "ok " << (cfg.sources.empty() ? std::string("<defaults>") : cfg.sources.back().string()) << "\n";
        return 0;
    }
    int rc = 0;
    for (const auto& f : files) {
        try {
            config::load_file(f);
            std::cout << "ok " << f << "\n";
        } catch (const Error& e) {
            std::cerr << e.detail() << "\n";
            rc = kExitConfig;
        }
    }
    return rc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meshgate: IPv4/IPv6 gateway for a simulated 6LoWPAN sensor mesh"};
    app.require_subcommand(1);

    SimArgs sim_a;
    auto* sim = app.add_subcommand("sim", "Run a scenario headless and write its trace");
    add_source(sim, sim_a.src);
    sim->add_option("--seed", sim_a.seed, "Override the scenario seed");
    sim->add_option("--duration", sim_a.duration_s, "Simulated seconds");
    sim->add_option("--motes", sim_a.motes, "Override the mote count");
    sim->add_option("--trace", sim_a.trace, "Write the event trace (JSON lines) here");
    sim->add_option("--summary", sim_a.summary, "Also write the summary JSON here");
    sim->add_option("--buffer", sim_a.buffer, "Gateway durable buffer directory");
    sim->add_option("--outage", sim_a.outages, "Take the middleware link down: START_S:LENGTH_S");
    sim->add_option("--restart-at", sim_a.restarts, "Restart the gateway at this simulated second");
    sim->add_option("--command", sim_a.commands, "Send a relay command: T_S:MOTE:APPLIANCE:VALUE");

    ServeArgs serve_a;
    auto* serve = app.add_subcommand("serve", "Run gateway, middleware and simulated mesh live");
    add_source(serve, serve_a.src);
    serve->add_option("--serial", serve_a.serial, "Sink serial endpoint (only 'sim')");
    serve->add_option("--listen", serve_a.listen, "External IPv4 boundary (only 'sim')");
    serve->add_option("--middleware", serve_a.middleware, "Deliver readings to this middleware URL over HTTP");
    serve->add_option("--buffer", serve_a.buffer, "Gateway durable buffer directory");
    serve->add_option("--http", serve_a.http, "Middleware API listen address HOST:PORT");
    serve->add_option("--speed", serve_a.speed, "Simulated seconds per wall-clock second");
    serve->add_option("--seed", serve_a.seed, "Override the scenario seed");
    serve->add_option("--for", serve_a.run_for_s, "Exit after this many wall-clock seconds (0: until interrupted)");

    auto* exp = app.add_subcommand("experiments", "Measurement runs");
    exp->require_subcommand(1);
    TrafficArgs traffic_a;
    auto* traffic = exp->add_subcommand("traffic", "Delay and jitter against mote count");
    add_source(traffic, traffic_a.src);
    traffic->add_option("--counts", traffic_a.counts, "Mote counts: A..B or a comma list");
    traffic->add_option("--duration", traffic_a.duration_s, "Simulated seconds per count");
    traffic->add_option("--seed", traffic_a.seed, "Seed");
    traffic->add_option("--out", traffic_a.out, "Output directory")->capture_default_str();
    XlatArgs xlat_a;
    auto* xlat = exp->add_subcommand("xlat", "Gateway IPv4 -> IPv6 transformation time");
    add_source(xlat, xlat_a.src);
    xlat->add_option("--packets", xlat_a.packets, "Packets to pump");
    xlat->add_option("--payload", xlat_a.payload, "Payload bytes per packet");
    xlat->add_option("--seed", xlat_a.seed, "Packet generator seed")->capture_default_str();
    xlat->add_option("--out", xlat_a.out, "Output directory")->capture_default_str();

    std::string plot_in = "results", plot_out;
    auto* plot_cmd = app.add_subcommand("plot", "Render experiment results as SVG");
    plot_cmd->add_option("--in", plot_in, "Directory with traffic.json / xlat.json")->capture_default_str();
    plot_cmd->add_option("--out", plot_out, "Output directory (default: --in)");

    Source val_src;
    std::vector<std::string> val_files;
    auto* val = app.add_subcommand("validate-config", "Check config files");
    add_source(val, val_src);
    val->add_option("files", val_files, "Files to check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitConfig;
    }

    try {
        if (*sim) return run_sim(sim_a);
        if (*serve) return run_serve(serve_a);
        if (*traffic) return run_traffic(traffic_a);
        if (*xlat) return run_xlat(xlat_a);
        if (*plot_cmd) return run_plot(plot_in, plot_out);
        if (*val) return run_validate(val_src, val_files);
    } catch (const Error& e) {
        std::cerr << "error: " << (e.detail().empty() ? e.what() : e.detail()) << "\n";
        return e.code() == Errc::config_error ? kExitConfig : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
