// neurochain: command line entry points for the decoding chain.
//
//   neurochain gen     --config synth.conf --out data/ [--seed N]
//   neurochain fit     --spikes s.csv --positions p.csv --finger index --out index.params
//   neurochain replay  --config grasp.scenario [--virtual-clock] [--addr host:port] [--out trace.csv]
//   neurochain eval    --trace trace.csv
//   neurochain serve   [--addr host:port] [--ws-port 7421] [--config arm.conf]
//   neurochain control [--addr host:port] --kp 1.5 --target-mm 10 --out trace.csv
//
// Reports are `key = value` lines on stdout. Exit codes: 0 ok, 2 config
// error, 3 data error, 4 transport error.

#include "neurochain/armsim.hpp"
#include "neurochain/client.hpp"
#include "neurochain/controller.hpp"
#include "neurochain/decoder.hpp"
#include "neurochain/errors.hpp"
#include "neurochain/kvconfig.hpp"
#include "neurochain/log.hpp"
#include "neurochain/pipeline.hpp"
#include "neurochain/server.hpp"
#include "neurochain/stats.hpp"
#include "neurochain/synth.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <thread>

namespace fs = std::filesystem;
using namespace neurochain;

namespace {

template <typename T>
void report(const std::string& key, const T& value) {
    std::cout << key << " = " << value << "\n";
}

void report(const std::string& key, double value) { std::cout << key << " = " << format_double(value) << "\n"; }

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return in;
}

ArmConfig arm_config(const std::string& path, std::optional<std::int64_t> cmd_lat, std::optional<std::int64_t> fb_lat) {
    ArmConfig cfg = path.empty() ? ArmConfig{} : ArmConfig::from_doc(KeyValueDoc::load(path));
    if (cmd_lat) cfg.command_latency_ms = *cmd_lat;
    if (fb_lat) cfg.feedback_latency_ms = *fb_lat;
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------

struct GenArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

int cmd_gen(const GenArgs& a) {
    SynthConfig cfg = a.config.empty() ? SynthConfig{} : SynthConfig::from_doc(KeyValueDoc::load(a.config));
    if (a.seed) cfg.seed = *a.seed;
    cfg.validate();
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw DataError("cannot create " + a.out + ": " + ec.message());

    const auto data = generate(cfg);
    {
        auto out = open_out((fs::path(a.out) / "spikes.csv").string());
        write_spike_csv(out, data.trains);
    }
    {
        auto out = open_out((fs::path(a.out) / "positions.csv").string());
        write_position_csv(out, data.index, data.thumb);
    }
    auto manifest = cfg.to_doc();
    manifest.set("spikes", std::to_string(data.spike_count()));
    manifest.set("samples", std::to_string(data.index.size()));
    {
        auto out = open_out((fs::path(a.out) / "manifest.txt").string());
        manifest.write(out, "neurochain-manifest v1");
    }
    report("seed", cfg.seed);
    report("channels", cfg.channels);
    report("duration_s", cfg.duration_s);
    report("spikes", data.spike_count());
    report("samples", data.index.size());
    return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string spikes, positions, finger = "index", out, config;
    std::optional<double> ridge;
    double train_fraction = 0.8;
    std::optional<std::uint32_t> channels;
};

int cmd_fit(const FitArgs& a) {
    FitConfig fc;
    fc.ridge = 10.0;
    if (!a.config.empty()) {
        const auto doc = KeyValueDoc::load(a.config);
        fc.bin_width = doc.number("bin_width", fc.bin_width);
        fc.depth = static_cast<int>(doc.integer("depth", fc.depth));
        fc.sync_delta = doc.number("sync_delta", fc.sync_delta);
        fc.pair_count = static_cast<std::size_t>(doc.integer("pair_count", static_cast<std::int64_t>(fc.pair_count)));
        fc.ridge = doc.number("ridge", fc.ridge);
        fc.thresholds.percentile = doc.number("threshold_percentile", fc.thresholds.percentile);
    }
    if (a.ridge) fc.ridge = *a.ridge;
    if (!(a.train_fraction > 0.0 && a.train_fraction < 1.0)) throw ConfigError("--train-fraction must be in (0, 1)");
    if (a.finger != "index" && a.finger != "thumb") throw ConfigError("--finger must be index or thumb");

    auto sin = open_in(a.spikes);
    auto rec = read_spike_csv(sin);
    if (a.channels) {
        if (rec.channel_count > *a.channels)
            throw ConfigError("spike file has " + std::to_string(rec.channel_count) + " channels, --channels says " +
                              std::to_string(*a.channels));
        rec.channel_count = *a.channels;
    }
    auto pin = open_in(a.positions);
    const auto table = read_position_csv(pin);
    const auto& target = a.finger == "index" ? table.index : table.thumb;
    const auto trains = trains_by_channel(rec);

    const auto n = target.size();
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * a.train_fraction));
    const auto train = target.slice(0, n_train);
    const auto test = target.slice(n_train, n - n_train);

    FitReport fr;
    const auto params = fit(trains, train, fc, &fr);
    {
        auto out = open_out(a.out);
        params.save(out);
    }
    report("finger", a.finger);
    report("channels", params.channel_count());
    report("pairs", params.pairs.size());
    report("train_samples", n_train);
    report("test_samples", test.size());
    report("rows", fr.rows);
    report("train_rmse_delta_mm", fr.train_rmse_delta);
    report("normal_residual", fr.normal_residual);
    if (test.size() >= 2) {
        const auto pred = replay(params, trains, test.first_index, test.size(), test.positions_mm.front());
        const auto train_pred = replay(params, trains, train.first_index, train.size(), train.positions_mm.front());
        auto metrics = [](const std::string& prefix, const FingerTrajectory& p, const FingerTrajectory& t) {
            const Eigen::Map<const Eigen::VectorXd> pv(p.positions_mm.data(), static_cast<Eigen::Index>(p.size()));
            const Eigen::Map<const Eigen::VectorXd> tv(t.positions_mm.data(), static_cast<Eigen::Index>(t.size()));
            report(prefix + "_rmse_mm", rmse(pv, tv));
            try {
                report(prefix + "_correlation", pearson(pv, tv));
            } catch (const MetricError&) {
                report(prefix + "_correlation", std::string("undefined"));
            }
        };
        metrics("train", train_pred, train);
        metrics("test", pred, test);
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct ReplayArgs {
    std::string scenario, addr, out, telemetry, arm_config;
    bool virtual_clock = false;
    bool print = false;
    std::vector<std::string> vars;
};

int cmd_replay(const ReplayArgs& a) {
    std::map<std::string, std::string> vars;
    for (const auto& kv : a.vars) {
        auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--var expects name=value, got `" + kv + "`");
        vars[kv.substr(0, eq)] = kv.substr(eq + 1);
    }

    std::unique_ptr<ArmServer> server;
    RunOptions opt;
    opt.virtual_clock = a.virtual_clock;
    if (a.print) opt.printer_out = &std::cout;
    if (a.virtual_clock) {
        ServerConfig sc;
        sc.tcp = {"127.0.0.1", 0};
        sc.ws_port.reset();
        sc.virtual_clock = true;
        sc.arm = arm_config(a.arm_config, {}, {});
        server = std::make_unique<ArmServer>(sc);
        vars.try_emplace("addr", server->endpoint().str());
        opt.on_tick = [&server, last = std::int64_t{0}](std::int64_t end_ms) mutable {
            server->advance(end_ms - last);
            last = end_ms;
        };
    } else {
        vars.try_emplace("addr", a.addr.empty() ? Endpoint{"127.0.0.1", kDefaultTcpPort}.str() : a.addr);
    }

    const auto graph = load_scenario(a.scenario, vars);
    const auto rep = run(graph, opt);

    report("boxes", graph.boxes().size());
    report("links", graph.links().size());
    report("chunks", rep.chunks);
    for (const auto& [key, values] : rep.traces) report("samples." + key, values.size());
    report("targets_sent", rep.targets_sent);
    report("targets_dropped", rep.targets_dropped);
    report("wall_s", rep.wall_s);
    if (!a.out.empty()) {
        auto out = open_out(a.out);
        write_trace_csv(out, rep.client_trace);
        report("trace_records", rep.client_trace.size());
    }
    if (server && !a.telemetry.empty()) {
        auto out = open_out(a.telemetry);
        server->with_sim([&](ArmSim& sim) { sim.write_telemetry(out); });
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string trace;
    double window_s = 2.0;
    std::int64_t max_lag_ms = 2000;
};

int cmd_eval(const EvalArgs& a) {
    auto in = open_in(a.trace);
    const auto trace = read_trace_csv(in);
    const auto lag = measure_lag(trace, a.max_lag_ms);
    Eigen::VectorXd req(static_cast<Eigen::Index>(trace.size())), act(req.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        req(static_cast<Eigen::Index>(i)) = trace[i].requested_mm;
        act(static_cast<Eigen::Index>(i)) = trace[i].actual_mm;
    }
    const auto osc = detect_oscillation(trace, a.window_s);
    report("records", trace.size());
    report("lag_ms", lag.lag_ms);
    report("lag_peak_correlation", lag.peak_correlation);
    report("lag_low_confidence", lag.low_confidence ? "true" : "false");
    report("rmse_mm", rmse(req, act));
    report("sign_changes", osc.sign_changes);
    report("peak_error_mm", osc.peak_mm);
    report("decay_ratio", osc.decay_ratio);
    if (lag.low_confidence) std::cout << "# lag estimate is low confidence\n";
    return 0;
}

// ---------------------------------------------------------------------------

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct ServeArgs {
    std::string addr = "127.0.0.1:7420";
    int ws_port = kDefaultWebSocketPort;
    std::string config, telemetry;
    std::optional<std::int64_t> cmd_lat, fb_lat;
    double duration_s = 0.0;
};

int cmd_serve(const ServeArgs& a) {
    ServerConfig sc;
    sc.tcp = Endpoint::parse(a.addr);
    if (a.ws_port < 0) sc.ws_port.reset();
    else sc.ws_port = static_cast<std::uint16_t>(a.ws_port);
    sc.arm = arm_config(a.config, a.cmd_lat, a.fb_lat);
    ArmServer server(sc);
    report("tcp_port", server.tcp_port());
    report("ws_port", server.ws_port());
    std::cout.flush();

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const auto start = std::chrono::steady_clock::now();
    while (!g_stop) {
        std::this_thread::sleep_for(Millis(50));
        if (a.duration_s > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= a.duration_s)
            break;
    }
    if (!a.telemetry.empty()) {
        auto out = open_out(a.telemetry);
        server.with_sim([&](ArmSim& sim) { sim.write_telemetry(out); });
    }
    server.stop();
    report("stopped", "true");
    return 0;
}

// ---------------------------------------------------------------------------

struct ControlArgs {
    std::string addr, config, out;
    double kp = 1.5, clamp = 40.0, target_mm = 10.0, duration_s = 10.0;
    double sine_amplitude = 0.0, sine_period_s = 4.0;
    std::int64_t period_ms = 20;
    std::optional<std::int64_t> cmd_lat, fb_lat;
    bool track = false;
};

int cmd_control(const ControlArgs& a) {
    PControllerConfig pc;
    pc.gain_per_s = a.kp;
    pc.period_ms = a.period_ms;
    pc.velocity_clamp_mm_s = a.clamp;
    pc.validate();
    TargetSignal target;
    if (a.sine_amplitude > 0) {
        target = [base = a.target_mm, amp = a.sine_amplitude, per = a.sine_period_s](std::int64_t t) {
            return base + amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 1000.0 / per);
        };
    } else {
        target = [v = a.target_mm](std::int64_t) { return v; };
    }
    const auto duration = static_cast<std::int64_t>(std::llround(a.duration_s * 1000.0));

    LoopResult res;
    if (a.addr.empty()) {
        if (a.track) throw ConfigError("--track needs a server (--addr)");
        ArmSim sim(arm_config(a.config, a.cmd_lat, a.fb_lat));
        res = run_loop(pc, target, sim, duration);
    } else {
        auto client = Client::connect(Endpoint::parse(a.addr));
        res = a.track ? run_tracking(target, client, duration, pc.period_ms, wall_pacer())
                      : run_loop(pc, target, client, duration, wall_pacer());
    }
    if (!a.out.empty()) {
        auto out = open_out(a.out);
        write_trace_csv(out, res.trace);
    }
    report("records", res.trace.size());
    report("complete", res.complete ? "true" : "false");
    if (!res.trace.empty()) {
        const auto& last = res.trace.back();
        report("final_error_mm", last.requested_mm - last.actual_mm);
        const auto osc = detect_oscillation(res.trace, 2.0);
        report("sign_changes_final_2s", osc.sign_changes);
        report("decay_ratio_final_2s", osc.decay_ratio);
    }
    return res.complete ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    init_logging();
    CLI::App app{"neurochain: spike decoding chain, arm simulator and control tools"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "generate synthetic spikes and finger trajectories");
    g->add_option("--config", gen.config, "synth config file");
    g->add_option("--out", gen.out, "output directory")->required();
    g->add_option("--seed", gen.seed, "override the config seed");

    FitArgs fa;
    auto* f = app.add_subcommand("fit", "fit one finger's decoder");
    f->add_option("--spikes", fa.spikes)->required();
    f->add_option("--positions", fa.positions)->required();
    f->add_option("--finger", fa.finger, "index or thumb");
    f->add_option("--out", fa.out, "params file to write")->required();
    f->add_option("--config", fa.config, "fit settings (bin_width, depth, ridge, ...)");
    f->add_option("--ridge", fa.ridge);
    f->add_option("--train-fraction", fa.train_fraction);
    f->add_option("--channels", fa.channels, "expected channel count");

    ReplayArgs ra;
    auto* r = app.add_subcommand("replay", "run a scenario");
    r->add_option("--config", ra.scenario, "scenario file")->required();
    r->add_option("--addr", ra.addr, "arm server host:port");
    r->add_flag("--virtual-clock", ra.virtual_clock, "host a virtual-clock arm server in process");
    r->add_option("--out", ra.out, "client trace CSV");
    r->add_option("--telemetry", ra.telemetry, "in-process server telemetry CSV");
    r->add_option("--arm-config", ra.arm_config, "arm config for the in-process server");
    r->add_option("--var", ra.vars, "scenario variable name=value");
    r->add_flag("--print", ra.print, "let Printer boxes write to stdout");

    EvalArgs ea;
    auto* e = app.add_subcommand("eval", "lag and oscillation metrics of a trace");
    e->add_option("--trace,trace", ea.trace)->required();
    e->add_option("--window", ea.window_s, "oscillation window in seconds");
    e->add_option("--max-lag-ms", ea.max_lag_ms);

    ServeArgs sa;
    auto* s = app.add_subcommand("serve", "run the arm server");
    s->add_option("--addr", sa.addr);
    s->add_option("--ws-port", sa.ws_port, "-1 disables the websocket listener");
    s->add_option("--config", sa.config, "arm config file");
    s->add_option("--command-latency-ms", sa.cmd_lat);
    s->add_option("--feedback-latency-ms", sa.fb_lat);
    s->add_option("--telemetry", sa.telemetry, "telemetry CSV written on shutdown");
    s->add_option("--duration-s", sa.duration_s, "stop after this long (0 = until signalled)");

    ControlArgs ca;
    auto* c = app.add_subcommand("control", "proportional control loop");
    c->add_option("--addr", ca.addr, "arm server; in-process sim when omitted");
    c->add_option("--config", ca.config, "arm config for the in-process sim");
    c->add_option("--kp", ca.kp);
    c->add_option("--period-ms", ca.period_ms);
    c->add_option("--clamp", ca.clamp, "velocity clamp mm/s");
    c->add_option("--target-mm", ca.target_mm);
    c->add_option("--sine-amplitude", ca.sine_amplitude);
    c->add_option("--sine-period-s", ca.sine_period_s);
    c->add_option("--duration-s", ca.duration_s);
    c->add_option("--command-latency-ms", ca.cmd_lat);
    c->add_option("--feedback-latency-ms", ca.fb_lat);
    c->add_flag("--track", ca.track, "stream the target directly, no controller");
    c->add_option("--out", ca.out, "trace CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*g) return cmd_gen(gen);
        if (*f) return cmd_fit(fa);
        if (*r) return cmd_replay(ra);
        if (*e) return cmd_eval(ea);
        if (*s) return cmd_serve(sa);
        if (*c) return cmd_control(ca);
    } catch (const Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return err.exit_code();
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
