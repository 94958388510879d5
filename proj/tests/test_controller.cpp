#include "neurochain/armsim.hpp"
#include "neurochain/client.hpp"
#include "neurochain/controller.hpp"
#include "neurochain/errors.hpp"
#include "neurochain/server.hpp"
#include "neurochain/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace neurochain;

namespace {

std::vector<TraceRecord> synthetic(std::int64_t period_ms, std::int64_t n, const std::function<double(double)>& req,
                                   const std::function<double(double)>& act) {
    std::vector<TraceRecord> out;
    for (std::int64_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i * period_ms) / 1000.0;
        out.push_back({i * period_ms, req(t), act(t), 0.0});
    }
    return out;
}

double wave(double t) { return std::sin(2.0 * std::numbers::pi * t / 2.0) + 0.5 * std::sin(2.0 * std::numbers::pi * t / 0.7); }

}  // namespace

TEST_CASE("control step") {
    PControllerConfig cfg;
    cfg.gain_per_s = 2.0;
    cfg.velocity_clamp_mm_s = 10.0;
    CHECK(control_step(cfg, 3.0, 1.0) == 4.0);
    CHECK(control_step(cfg, 1.0, 3.0) == -4.0);
    CHECK(control_step(cfg, 20.0, 0.0) == 10.0);
    CHECK(control_step(cfg, 0.0, 20.0) == -10.0);
    CHECK(control_step(cfg, 5.0, 5.0) == 0.0);
    cfg.period_ms = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero latency loop decays geometrically") {
    ArmConfig arm;
    arm.command_latency_ms = 0;
    arm.feedback_latency_ms = 0;
    ArmSim sim(arm);
    PControllerConfig cfg;
    cfg.gain_per_s = 5.0;
    const auto run = run_loop(cfg, [](std::int64_t) { return 5.0; }, sim, 2000);
    REQUIRE(run.trace.size() == 100);
    // Each period removes Kp * T = 0.1 of the remaining error.
    double prev = 1e9;
    for (std::size_t k = 0; k < run.trace.size(); ++k) {
        const double e = run.trace[k].requested_mm - run.trace[k].actual_mm;
        CHECK(e == doctest::Approx(5.0 * std::pow(0.9, static_cast<double>(k))).epsilon(1e-9));
        CHECK(e < prev);
        prev = e;
        if (run.trace[k].t_ms >= 1500) CHECK(std::abs(e) < 0.1);
    }
}

TEST_CASE("gentle gain under latency overshoots little") {
    ArmSim sim(ArmConfig{});
    PControllerConfig cfg;
    cfg.gain_per_s = 1.5;
    const auto run = run_loop(cfg, [](std::int64_t) { return 10.0; }, sim, 8000);
    double peak = 0.0;
    for (const auto& r : run.trace) peak = std::max(peak, r.actual_mm);
    CHECK(peak < 12.0);
    CHECK(std::abs(run.trace.back().requested_mm - run.trace.back().actual_mm) < 0.1);
}

TEST_CASE("lag of a shifted copy") {
    const auto shifted = synthetic(20, 500, wave, [](double t) { return wave(t - 0.3); });
    const auto rep = measure_lag(shifted);
    CHECK(std::abs(rep.lag_ms - 300) <= 20);
    CHECK(rep.peak_correlation > 0.99);
    CHECK(!rep.low_confidence);

    const auto same = synthetic(20, 500, wave, wave);
    CHECK(measure_lag(same).lag_ms == 0);
    CHECK(measure_lag(same).peak_correlation == doctest::Approx(1.0));

    const auto early = synthetic(20, 500, wave, [](double t) { return wave(t + 0.1); });
    CHECK(measure_lag(early).lag_ms == -100);
}

TEST_CASE("lag of unrelated noise has low confidence") {
    Xoshiro256 rng(3);
    std::vector<double> noise;
    for (int i = 0; i < 2000; ++i) noise.push_back(rng.uniform());
    std::size_t k = 0;
    const auto trace = synthetic(20, 2000, wave, [&](double) { return noise[k++]; });
    CHECK(measure_lag(trace).low_confidence);
}

TEST_CASE("lag errors") {
    const auto flat = synthetic(20, 500, [](double) { return 1.0; }, wave);
    CHECK_THROWS_AS(measure_lag(flat), MetricError);
    const auto dead = synthetic(20, 500, wave, [](double) { return 0.0; });
    CHECK_THROWS_AS(measure_lag(dead), MetricError);
    const auto short_trace = synthetic(20, 50, wave, wave);
    CHECK_THROWS_AS(measure_lag(short_trace), MetricError);
    auto uneven = synthetic(20, 500, wave, wave);
    uneven[10].t_ms += 1;
    CHECK_THROWS_AS(measure_lag(uneven), MetricError);
}

TEST_CASE("oscillation detection") {
    SUBCASE("convergent") {
        const auto tr = synthetic(20, 500, [](double) { return 0.0; }, [](double t) { return 10.0 * std::exp(-t); });
        const auto rep = detect_oscillation(tr, 2.0);
        CHECK(rep.sign_changes == 0);
        CHECK(rep.decay_ratio < 0.5);
    }
    SUBCASE("sustained sinusoid") {
        // Error zeros at t = 0.4 s + k * 0.5 s; four of them fall in (7.98, 9.98].
        const auto tr = synthetic(20, 500, [](double t) { return std::sin(2.0 * std::numbers::pi * (t + 0.1)); },
                                  [](double) { return 0.0; });
        const auto rep = detect_oscillation(tr, 2.0);
        CHECK(rep.sign_changes == 4);
        CHECK(rep.peak_mm == doctest::Approx(1.0).epsilon(0.01));
        CHECK(rep.decay_ratio == doctest::Approx(1.0).epsilon(0.01));
    }
    SUBCASE("flat") {
        const auto tr = synthetic(20, 500, [](double) { return 2.0; }, [](double) { return 2.0; });
        const auto rep = detect_oscillation(tr, 2.0);
        CHECK(rep.sign_changes == 0);
        CHECK(rep.peak_mm == 0.0);
        CHECK(rep.decay_ratio == 0.0);
    }
}

TEST_CASE("trace csv") {
    const std::vector<TraceRecord> trace{{0, 1.25, 0.5, 2.0}, {20, 1.5, 0.75, -0.125}};
    std::stringstream io;
    write_trace_csv(io, trace);
    const auto back = read_trace_csv(io);
    REQUIRE(back.size() == 2);
    CHECK(back[1].t_ms == 20);
    CHECK(back[1].requested_mm == 1.5);
    CHECK(back[1].actual_mm == 0.75);
    CHECK(back[1].command_mm_s == -0.125);

    std::istringstream three("t_ms,requested_mm,actual_mm\n0,1,2\n");
    CHECK(read_trace_csv(three).front().actual_mm == 2.0);
    std::istringstream bad("t,r\n");
    CHECK_THROWS_AS(read_trace_csv(bad), ParseError);
    std::istringstream backwards("t_ms,requested_mm,actual_mm\n20,1,2\n0,1,2\n");
    CHECK_THROWS_AS(read_trace_csv(backwards), DataError);
}

TEST_CASE("remote loop through the server") {
    ServerConfig scfg;
    scfg.tcp = {"127.0.0.1", 0};
    scfg.ws_port = std::nullopt;
    scfg.virtual_clock = true;
    ArmServer server(scfg);
    auto client = Client::connect(server.endpoint());
    PControllerConfig cfg;
    cfg.gain_per_s = 1.5;
    const auto run = run_loop(cfg, [](std::int64_t) { return 10.0; }, client, 8000,
                              [&](std::int64_t ms) { server.advance(ms); });
    CHECK(run.complete);
    REQUIRE(run.trace.size() == 400);
    CHECK(std::abs(run.trace.back().requested_mm - run.trace.back().actual_mm) < 0.1);
}

TEST_CASE("tracking through the server lags by the round trip") {
    ServerConfig scfg;
    scfg.tcp = {"127.0.0.1", 0};
    scfg.ws_port = std::nullopt;
    scfg.virtual_clock = true;
    ArmServer server(scfg);
    auto client = Client::connect(server.endpoint());
    const auto track = run_tracking([](std::int64_t t) { return 5.0 - 5.0 * std::cos(2.0 * std::numbers::pi * t / 4000.0); },
                                    client, 8000, 20, [&](std::int64_t ms) { server.advance(ms); });
    CHECK(track.complete);
    CHECK(std::abs(measure_lag(track.trace).lag_ms - 300) <= 20);
}

TEST_CASE("remote loop stops when the server goes away") {
    ServerConfig scfg;
    scfg.tcp = {"127.0.0.1", 0};
    scfg.ws_port = std::nullopt;
    scfg.virtual_clock = true;
    auto server = std::make_unique<ArmServer>(scfg);
    auto client = Client::connect(server->endpoint(), Millis(200));
    PControllerConfig cfg;
    int periods = 0;
    const auto run = run_loop(cfg, [](std::int64_t) { return 10.0; }, client, 4000, [&](std::int64_t ms) {
        if (++periods == 10) server.reset();
        else if (server) server->advance(ms);
    });
    CHECK(!run.complete);
    CHECK(run.trace.size() == 10);
}
