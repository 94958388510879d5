#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace neurochain {

class ArmSim;
class Client;

struct PControllerConfig {
    double gain_per_s = 1.5;  // Kp: mm/s of aperture velocity per mm of error
    std::int64_t period_ms = 20;
    double velocity_clamp_mm_s = 40.0;
    /// Range the integrated target of a remote loop is kept in.
    double aperture_min_mm = 0.0;
    double aperture_max_mm = 40.0;

    void validate() const;
};

struct TraceRecord {
    std::int64_t t_ms = 0;
    double requested_mm = 0.0;
    double actual_mm = 0.0;  // last feedback received
    double command_mm_s = 0.0;
};

struct LoopResult {
    std::vector<TraceRecord> trace;
    /// False when the transport failed before the requested duration.
    bool complete = true;
};

/// Requested aperture as a function of loop time in ms.
using TargetSignal = std::function<double(std::int64_t t_ms)>;
/// Lets one control period elapse (advance a virtual clock or sleep).
using Pacer = std::function<void(std::int64_t period_ms)>;

double control_step(const PControllerConfig& cfg, double target_mm, double feedback_mm);

/// In-process loop: velocity goes through the arm's command queue, feedback
/// comes from its sensor queue. Advances the sim by one period per record.
LoopResult run_loop(const PControllerConfig& cfg, const TargetSignal& target, ArmSim& sim, std::int64_t duration_ms);

/// Remote loop: the velocity is integrated into a position target sent once
/// per period, which the arm's servo follows. A poll that times out reuses the
/// last feedback.
LoopResult run_loop(const PControllerConfig& cfg, const TargetSignal& target, Client& client, std::int64_t duration_ms,
                    const Pacer& pace);

/// Streams `target` itself once per period and polls the state, with no
/// controller in the loop.
LoopResult run_tracking(const TargetSignal& target, Client& client, std::int64_t duration_ms, std::int64_t period_ms,
                        const Pacer& pace);

/// Real-time pacer: sleeps until the next period boundary.
Pacer wall_pacer();

struct LagReport {
    std::int64_t lag_ms = 0;
    double peak_correlation = 0.0;
    bool low_confidence = false;  // peak below 0.3
};

/// Shift of `actual` behind `requested` maximising their Pearson correlation,
/// searched on the trace period grid within +-max_lag_ms. Throws MetricError
/// for short, irregular or constant traces.
LagReport measure_lag(std::span<const TraceRecord> trace, std::int64_t max_lag_ms = 2000);

struct OscillationReport {
    std::size_t sign_changes = 0;
    double peak_mm = 0.0;
    /// max |error| over the last half of the window divided by peak_mm; 0 when
    /// the error is identically zero.
    double decay_ratio = 0.0;
};

/// Error (requested - actual) analysis over the last `window_s` of the trace.
OscillationReport detect_oscillation(std::span<const TraceRecord> trace, double window_s);

void write_trace_csv(std::ostream& out, std::span<const TraceRecord> trace);
/// Accepts `t_ms,requested_mm,actual_mm[,command_mm_s]`.
std::vector<TraceRecord> read_trace_csv(std::istream& in);

}  // namespace neurochain
