#include "neurochain/controller.hpp"

#include "neurochain/armsim.hpp"
#include "neurochain/client.hpp"
#include "neurochain/errors.hpp"
#include "neurochain/stats.hpp"
#include "text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <thread>

namespace neurochain {

void PControllerConfig::validate() const {
    if (!(gain_per_s >= 0.0)) throw ConfigError("controller: gain must be >= 0");
    if (period_ms <= 0) throw ConfigError("controller: period must be > 0 ms");
    if (!(velocity_clamp_mm_s > 0.0)) throw ConfigError("controller: velocity clamp must be > 0");
    if (!(aperture_min_mm < aperture_max_mm)) throw ConfigError("controller: empty aperture range");
}

double control_step(const PControllerConfig& cfg, double target_mm, double feedback_mm) {
    return std::clamp(cfg.gain_per_s * (target_mm - feedback_mm), -cfg.velocity_clamp_mm_s, cfg.velocity_clamp_mm_s);
}

LoopResult run_loop(const PControllerConfig& cfg, const TargetSignal& target, ArmSim& sim, std::int64_t duration_ms) {
    cfg.validate();
    LoopResult out;
    const std::int64_t start = sim.now_ms();
    for (std::int64_t t = 0; t < duration_ms; t += cfg.period_ms) {
        const double req = target(t);
        const double fb = sim.feedback().state.aperture_mm();
        const double v = control_step(cfg, req, fb);
        sim.submit_velocity(v);
        out.trace.push_back({t, req, fb, v});
        sim.advance(start + t + cfg.period_ms - sim.now_ms());
    }
    return out;
}

LoopResult run_loop(const PControllerConfig& cfg, const TargetSignal& target, Client& client, std::int64_t duration_ms,
                    const Pacer& pace) {
    cfg.validate();
    LoopResult out;
    std::optional<double> feedback;
    double integrated = 0.0;
    for (std::int64_t t = 0; t < duration_ms; t += cfg.period_ms) {
        try {
            const double fb = client.poll_state().aperture.mm();
            if (!feedback) integrated = fb;
            feedback = fb;
        } catch (const TransportError& e) {
            spdlog::debug("no fresh state at t={} ms: {}", t, e.what());
        }
        const double req = target(t);
        const double fb = feedback.value_or(integrated);
        const double v = control_step(cfg, req, fb);
        integrated = std::clamp(integrated + v * static_cast<double>(cfg.period_ms) / 1000.0, cfg.aperture_min_mm,
                                cfg.aperture_max_mm);
        try {
            client.send_target(integrated, static_cast<std::uint64_t>(t));
        } catch (const TransportError& e) {
            spdlog::warn("control loop stopped at t={} ms: {}", t, e.what());
            out.complete = false;
            return out;
        }
        out.trace.push_back({t, req, fb, v});
        pace(cfg.period_ms);
    }
    return out;
}

LoopResult run_tracking(const TargetSignal& target, Client& client, std::int64_t duration_ms, std::int64_t period_ms,
                        const Pacer& pace) {
    if (period_ms <= 0) throw ConfigError("tracking: period must be > 0 ms");
    LoopResult out;
    double fb = 0.0;
    double prev = target(0);
    for (std::int64_t t = 0; t < duration_ms; t += period_ms) {
        const double req = target(t);
        try {
            client.send_target(std::clamp(req, 0.0, 999.999), static_cast<std::uint64_t>(t));
            fb = client.poll_state().aperture.mm();
        } catch (const TransportError& e) {
            spdlog::warn("tracking stopped at t={} ms: {}", t, e.what());
            out.complete = false;
            return out;
        }
        out.trace.push_back({t, req, fb, (req - prev) * 1000.0 / static_cast<double>(period_ms)});
        prev = req;
        pace(period_ms);
    }
    return out;
}

Pacer wall_pacer() {
    auto next = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
    return [next](std::int64_t period_ms) {
        *next += std::chrono::milliseconds(period_ms);
        std::this_thread::sleep_until(*next);
    };
}

// ---------------------------------------------------------------------------
// Analytics

namespace {

std::int64_t trace_period(std::span<const TraceRecord> trace) {
    if (trace.size() < 2) throw MetricError("trace needs at least two records");
    const auto period = trace[1].t_ms - trace[0].t_ms;
    if (period <= 0) throw MetricError("trace times must increase");
    for (std::size_t i = 1; i < trace.size(); ++i)
        if (trace[i].t_ms - trace[i - 1].t_ms != period) throw MetricError("trace is not uniformly sampled");
    return period;
}

}  // namespace

LagReport measure_lag(std::span<const TraceRecord> trace, std::int64_t max_lag_ms) {
    const auto period = trace_period(trace);
    const auto n = static_cast<Eigen::Index>(trace.size());
    if (trace.back().t_ms - trace.front().t_ms + period < 2000) throw MetricError("trace shorter than 2 s");
    Eigen::VectorXd req(n), act(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        req(i) = trace[static_cast<std::size_t>(i)].requested_mm;
        act(i) = trace[static_cast<std::size_t>(i)].actual_mm;
    }
    if (req.maxCoeff() == req.minCoeff()) throw MetricError("requested signal is constant");

    const auto max_shift = std::min<Eigen::Index>(max_lag_ms / period, n / 2);
    std::optional<LagReport> best;
    for (Eigen::Index s = -max_shift; s <= max_shift; ++s) {
        const Eigen::Index len = n - std::abs(s);
        const auto r = s >= 0 ? req.head(len) : req.tail(len);
        const auto a = s >= 0 ? act.tail(len) : act.head(len);
        if (r.maxCoeff() == r.minCoeff() || a.maxCoeff() == a.minCoeff()) continue;
        const double c = pearson(r, a);
        const bool better = !best || c > best->peak_correlation ||
                            (c == best->peak_correlation && std::abs(s) * period < std::abs(best->lag_ms));
        if (better) best = LagReport{s * period, c, false};
    }
    if (!best) throw MetricError("actual signal is constant");
    best->low_confidence = best->peak_correlation < 0.3;
    return *best;
}

OscillationReport detect_oscillation(std::span<const TraceRecord> trace, double window_s) {
    OscillationReport rep;
    if (trace.empty()) return rep;
    const double end = static_cast<double>(trace.back().t_ms);
    const double from = end - window_s * 1000.0;
    const double half = from + window_s * 500.0;
    int last_sign = 0;
    double late_peak = 0.0;
    for (const auto& r : trace) {
        if (static_cast<double>(r.t_ms) <= from) continue;
        const double e = r.requested_mm - r.actual_mm;
        const int sign = (e > 0) - (e < 0);
        if (sign != 0) {
            if (last_sign != 0 && sign != last_sign) ++rep.sign_changes;
            last_sign = sign;
        }
        rep.peak_mm = std::max(rep.peak_mm, std::abs(e));
        if (static_cast<double>(r.t_ms) > half) late_peak = std::max(late_peak, std::abs(e));
    }
    rep.decay_ratio = rep.peak_mm > 0.0 ? late_peak / rep.peak_mm : 0.0;
    return rep;
}

void write_trace_csv(std::ostream& out, std::span<const TraceRecord> trace) {
    out << "t_ms,requested_mm,actual_mm,command_mm_s\n";
    char buf[128];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.6f\n", static_cast<long long>(r.t_ms), r.requested_mm,
                      r.actual_mm, r.command_mm_s);
        out << buf;
    }
}

std::vector<TraceRecord> read_trace_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw ParseError("empty trace file", 1);
    const auto head = text::trim(line);
    const bool with_command = head == "t_ms,requested_mm,actual_mm,command_mm_s";
    if (!with_command && head != "t_ms,requested_mm,actual_mm")
        throw ParseError("expected header `t_ms,requested_mm,actual_mm[,command_mm_s]`", 1);
    std::vector<TraceRecord> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        const auto f = text::split(line, ',');
        if (f.size() != (with_command ? 4u : 3u)) throw ParseError("wrong number of fields", lineno);
        auto t = text::parse_int(f[0]);
        auto rq = text::parse_double(f[1]);
        auto ac = text::parse_double(f[2]);
        auto cm = with_command ? text::parse_double(f[3]) : std::optional<double>(0.0);
        if (!t || !rq || !ac || !cm) throw ParseError("malformed number", lineno);
        if (!out.empty() && *t <= out.back().t_ms) throw DataError("line " + std::to_string(lineno) + ": t_ms must increase");
        out.push_back({*t, *rq, *ac, *cm});
    }
    return out;
}

}  // namespace neurochain
