#pragma once

#include "neurochain/spike.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace neurochain {

class KeyValueDoc;

/// SplitMix64 step (Steele, Lea & Flood): state += 0x9E3779B97F4A7C15, then
/// the 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB finaliser.
std::uint64_t splitmix64(std::uint64_t& state);

/// xoshiro256** 1.0 (Blackman & Vigna), state filled from SplitMix64(seed).
/// With seed 0 the first outputs are 0x99EC5F36CB75F2B4, 0xBF6E1F784956452A.
class Xoshiro256 {
public:
    explicit Xoshiro256(std::uint64_t seed);
    std::uint64_t next();
    /// (next() >> 11) * 2^-53, in [0, 1).
    double uniform();
    /// -log(1 - u) / rate.
    double exponential(double rate);
    /// Box-Muller on two uniforms.
    double normal();

private:
    std::uint64_t s_[4];
};

/// Independent sub-stream seed for (seed, stream): SplitMix64 started at
/// seed ^ (stream * 0xD1B54A32D192ED03).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct ChannelTuning {
    double baseline_hz = 10.0;
    double gain_index = 0.0;  // Hz per mm/s of index velocity
    double gain_thumb = 0.0;  // Hz per mm/s of thumb velocity
};

struct SynthConfig {
    std::uint64_t seed = 1;
    std::uint32_t channels = 33;
    double duration_s = 25.0;
    double rate_hz = 500.0;

    // Tuning draws when `tuning` is empty: baseline uniform in
    // [baseline_min, baseline_max], |gain| uniform in [gain_min, gain_max] with
    // random sign, even channels follow the index, odd ones the thumb.
    double baseline_min_hz = 10.0;
    double baseline_max_hz = 30.0;
    double gain_min = 2.0;
    double gain_max = 4.0;
    std::vector<ChannelTuning> tuning;
    /// Rates follow the velocity this far ahead of the movement.
    double lead_s = 0.05;

    // Grip events: coordinated rise-hold-release pulses.
    double grips_per_minute = 20.0;
    std::optional<std::vector<double>> grip_onsets;  // overrides the random schedule
    double rise_s = 0.3;
    double hold_s = 0.6;
    double release_s = 0.4;
    double amplitude_index_mm = 8.0;
    double amplitude_thumb_mm = 6.0;
    double amplitude_jitter = 0.2;  // relative, uniform +-
    double rest_mm = 0.0;
    double noise_mm = 0.0;

    /// Throws ConfigError.
    void validate() const;
    static SynthConfig from_doc(const KeyValueDoc& doc);
    KeyValueDoc to_doc() const;
};

struct GripEvent {
    double onset_s = 0.0;
    double amplitude_index_mm = 0.0;
    double amplitude_thumb_mm = 0.0;
};

/// Analytic lever model behind the sampled trajectories.
class GripProfile {
public:
    GripProfile(const SynthConfig& cfg, std::vector<GripEvent> events);
    static GripProfile schedule(const SynthConfig& cfg);

    double index(double t) const { return eval(t, true, false); }
    double thumb(double t) const { return eval(t, false, false); }
    double index_velocity(double t) const { return eval(t, true, true); }
    double thumb_velocity(double t) const { return eval(t, false, true); }
    /// Largest |velocity| either finger reaches.
    double max_speed(bool index) const;
    const std::vector<GripEvent>& events() const { return events_; }

private:
    double eval(double t, bool index, bool derivative) const;
    std::vector<GripEvent> events_;
    double rise_, hold_, release_, rest_;
};

struct SynthData {
    FingerTrajectory index;
    FingerTrajectory thumb;
    std::vector<SpikeTrain> trains;
    std::vector<ChannelTuning> tuning;
    std::size_t spike_count() const;
};

std::vector<ChannelTuning> resolve_tuning(const SynthConfig& cfg);

std::pair<FingerTrajectory, FingerTrajectory> gen_trajectories(const SynthConfig& cfg, const GripProfile& profile);

/// Rate of channel `c` at time t: max(0, baseline + gains . velocity(t + lead)).
double channel_rate(const ChannelTuning& tuning, const GripProfile& profile, double lead_s, double t);

/// Inhomogeneous Poisson trains by thinning, one independent sub-stream per
/// channel. Times are quantised to 1 us (the spike CSV resolution) and a
/// candidate landing on its predecessor's microsecond is dropped.
std::vector<SpikeTrain> gen_spikes(const SynthConfig& cfg, const GripProfile& profile,
                                   std::span<const ChannelTuning> tuning);

SynthData generate(const SynthConfig& cfg);

}  // namespace neurochain
