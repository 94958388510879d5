#include "neurochain/synth.hpp"

#include "neurochain/errors.hpp"
#include "neurochain/kvconfig.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace neurochain {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {
constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Xoshiro256::Xoshiro256(std::uint64_t seed) {
    std::uint64_t st = seed;
    for (auto& s : s_) s = splitmix64(st);
}

std::uint64_t Xoshiro256::next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Xoshiro256::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Xoshiro256::exponential(double rate) { return -std::log1p(-uniform()) / rate; }

double Xoshiro256::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t st = seed ^ (stream * 0xD1B54A32D192ED03ull);
    return splitmix64(st);
}

namespace {
constexpr std::uint64_t kTrajectoryStream = 0;
constexpr std::uint64_t kTuningStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kChannelStreamBase = 16;
}  // namespace

// ---------------------------------------------------------------------------
// Config

void SynthConfig::validate() const {
    if (channels == 0) throw ConfigError("synth: channel count must be > 0");
    if (!(duration_s >= 0.0) || duration_s >= 4.0e6) throw ConfigError("synth: duration out of range");
    if (!(rate_hz > 0.0)) throw ConfigError("synth: sampling rate must be > 0");
    if (!(baseline_min_hz >= 0.0) || baseline_max_hz < baseline_min_hz) throw ConfigError("synth: bad baseline range");
    if (!(gain_min >= 0.0) || gain_max < gain_min) throw ConfigError("synth: bad gain range");
    if (!tuning.empty() && tuning.size() != channels) throw ConfigError("synth: tuning list does not match channels");
    if (!(rise_s > 0.0) || !(hold_s >= 0.0) || !(release_s > 0.0)) throw ConfigError("synth: bad grip durations");
    if (!(grips_per_minute >= 0.0)) throw ConfigError("synth: grips per minute must be >= 0");
    if (grips_per_minute > 0.0 && 60.0 / grips_per_minute < 1.5 * (rise_s + hold_s + release_s))
        throw ConfigError("synth: grip rate too high for the grip duration");
    if (!(amplitude_jitter >= 0.0) || amplitude_jitter >= 1.0) throw ConfigError("synth: jitter must be in [0, 1)");
    if (!(noise_mm >= 0.0)) throw ConfigError("synth: noise must be >= 0");
}

SynthConfig SynthConfig::from_doc(const KeyValueDoc& doc) {
    SynthConfig c;
    c.seed = static_cast<std::uint64_t>(doc.integer("seed", static_cast<std::int64_t>(c.seed)));
    c.channels = static_cast<std::uint32_t>(doc.integer("channels", c.channels));
    c.duration_s = doc.number("duration_s", c.duration_s);
    c.rate_hz = doc.number("rate_hz", c.rate_hz);
    c.baseline_min_hz = doc.number("baseline_min_hz", c.baseline_min_hz);
    c.baseline_max_hz = doc.number("baseline_max_hz", c.baseline_max_hz);
    c.gain_min = doc.number("gain_min", c.gain_min);
    c.gain_max = doc.number("gain_max", c.gain_max);
    c.lead_s = doc.number("lead_s", c.lead_s);
    c.grips_per_minute = doc.number("grips_per_minute", c.grips_per_minute);
    if (doc.has("grip_onsets")) c.grip_onsets = doc.numbers("grip_onsets");
    c.rise_s = doc.number("rise_s", c.rise_s);
    c.hold_s = doc.number("hold_s", c.hold_s);
    c.release_s = doc.number("release_s", c.release_s);
    c.amplitude_index_mm = doc.number("amplitude_index_mm", c.amplitude_index_mm);
    c.amplitude_thumb_mm = doc.number("amplitude_thumb_mm", c.amplitude_thumb_mm);
    c.amplitude_jitter = doc.number("amplitude_jitter", c.amplitude_jitter);
    c.rest_mm = doc.number("rest_mm", c.rest_mm);
    c.noise_mm = doc.number("noise_mm", c.noise_mm);
    if (doc.has("baselines")) {
        const auto b = doc.numbers("baselines");
        const auto gi = doc.numbers("gains_index");
        const auto gt = doc.numbers("gains_thumb");
        if (b.size() != gi.size() || b.size() != gt.size())
            throw ConfigError("synth: baselines, gains_index and gains_thumb must have equal length");
        for (std::size_t i = 0; i < b.size(); ++i) c.tuning.push_back({b[i], gi[i], gt[i]});
    }
    c.validate();
    return c;
}

KeyValueDoc SynthConfig::to_doc() const {
    KeyValueDoc d;
    d.set("seed", std::to_string(seed));
    d.set("channels", std::to_string(channels));
    d.set("duration_s", duration_s);
    d.set("rate_hz", rate_hz);
    d.set("baseline_min_hz", baseline_min_hz);
    d.set("baseline_max_hz", baseline_max_hz);
    d.set("gain_min", gain_min);
    d.set("gain_max", gain_max);
    d.set("lead_s", lead_s);
    d.set("grips_per_minute", grips_per_minute);
    if (grip_onsets) d.set("grip_onsets", *grip_onsets);
    d.set("rise_s", rise_s);
    d.set("hold_s", hold_s);
    d.set("release_s", release_s);
    d.set("amplitude_index_mm", amplitude_index_mm);
    d.set("amplitude_thumb_mm", amplitude_thumb_mm);
    d.set("amplitude_jitter", amplitude_jitter);
    d.set("rest_mm", rest_mm);
    d.set("noise_mm", noise_mm);
    if (!tuning.empty()) {
        std::vector<double> b, gi, gt;
        for (const auto& t : tuning) {
            b.push_back(t.baseline_hz);
            gi.push_back(t.gain_index);
            gt.push_back(t.gain_thumb);
        }
        d.set("baselines", b);
        d.set("gains_index", gi);
        d.set("gains_thumb", gt);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Trajectories

GripProfile::GripProfile(const SynthConfig& cfg, std::vector<GripEvent> events)
    : events_(std::move(events)), rise_(cfg.rise_s), hold_(cfg.hold_s), release_(cfg.release_s),
      rest_(cfg.rest_mm) {
    std::sort(events_.begin(), events_.end(), [](const auto& a, const auto& b) { return a.onset_s < b.onset_s; });
}

GripProfile GripProfile::schedule(const SynthConfig& cfg) {
    cfg.validate();
    Xoshiro256 rng(derive_seed(cfg.seed, kTrajectoryStream));
    auto jitter = [&](double a) { return a * (1.0 + cfg.amplitude_jitter * (2.0 * rng.uniform() - 1.0)); };
    std::vector<GripEvent> events;
    if (cfg.grip_onsets) {
        for (double t : *cfg.grip_onsets) events.push_back({t, jitter(cfg.amplitude_index_mm), jitter(cfg.amplitude_thumb_mm)});
    } else if (cfg.grips_per_minute > 0.0) {
        const double mean_gap = 60.0 / cfg.grips_per_minute;
        const double length = cfg.rise_s + cfg.hold_s + cfg.release_s;
        // Gaps are uniform in [0.5, 1.5] x mean but never shorter than a grip plus 0.2 s.
        double t = 0.5 + rng.uniform() * mean_gap;
        while (t < cfg.duration_s) {
            const double ai = jitter(cfg.amplitude_index_mm);
            const double at = jitter(cfg.amplitude_thumb_mm);
            events.push_back({t, ai, at});
            t += std::max(length + 0.2, mean_gap * (0.5 + rng.uniform()));
        }
    }
    return GripProfile(cfg, std::move(events));
}

double GripProfile::eval(double t, bool index, bool derivative) const {
    using std::numbers::pi;
    double acc = derivative ? 0.0 : rest_;
    // At most one event is active; the schedule keeps them disjoint.
    auto it = std::upper_bound(events_.begin(), events_.end(), t,
                               [](double x, const GripEvent& e) { return x < e.onset_s; });
    if (it == events_.begin()) return acc;
    const auto& e = *(it - 1);
    const double a = index ? e.amplitude_index_mm : e.amplitude_thumb_mm;
    const double u = t - e.onset_s;
    if (u < rise_) {
        acc += derivative ? a * pi / (2.0 * rise_) * std::sin(pi * u / rise_) : a * 0.5 * (1.0 - std::cos(pi * u / rise_));
    } else if (u < rise_ + hold_) {
        acc += derivative ? 0.0 : a;
    } else if (u < rise_ + hold_ + release_) {
        const double v = u - rise_ - hold_;
        acc += derivative ? -a * pi / (2.0 * release_) * std::sin(pi * v / release_)
                          : a * 0.5 * (1.0 + std::cos(pi * v / release_));
    }
    return acc;
}

double GripProfile::max_speed(bool index) const {
    double amax = 0.0;
    for (const auto& e : events_) amax = std::max(amax, std::abs(index ? e.amplitude_index_mm : e.amplitude_thumb_mm));
    return amax * std::numbers::pi / (2.0 * std::min(rise_, release_));
}

std::pair<FingerTrajectory, FingerTrajectory> gen_trajectories(const SynthConfig& cfg, const GripProfile& profile) {
    const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.rate_hz));
    FingerTrajectory index{0, cfg.rate_hz, {}};
    FingerTrajectory thumb{0, cfg.rate_hz, {}};
    index.positions_mm.resize(n);
    thumb.positions_mm.resize(n);
    Xoshiro256 noise(derive_seed(cfg.seed, kNoiseStream));
    for (std::size_t k = 0; k < n; ++k) {
        const double t = sample_time(static_cast<std::int64_t>(k), cfg.rate_hz);
        index.positions_mm[k] = profile.index(t);
        thumb.positions_mm[k] = profile.thumb(t);
        if (cfg.noise_mm > 0.0) {
            index.positions_mm[k] += cfg.noise_mm * noise.normal();
            thumb.positions_mm[k] += cfg.noise_mm * noise.normal();
        }
    }
    return {std::move(index), std::move(thumb)};
}

// ---------------------------------------------------------------------------
// Spikes

std::vector<ChannelTuning> resolve_tuning(const SynthConfig& cfg) {
    if (!cfg.tuning.empty()) return cfg.tuning;
    Xoshiro256 rng(derive_seed(cfg.seed, kTuningStream));
    std::vector<ChannelTuning> out(cfg.channels);
    for (std::uint32_t c = 0; c < cfg.channels; ++c) {
        auto& t = out[c];
        t.baseline_hz = cfg.baseline_min_hz + (cfg.baseline_max_hz - cfg.baseline_min_hz) * rng.uniform();
        double g = cfg.gain_min + (cfg.gain_max - cfg.gain_min) * rng.uniform();
        if (rng.uniform() < 0.5) g = -g;
        (c % 2 == 0 ? t.gain_index : t.gain_thumb) = g;
    }
    return out;
}

double channel_rate(const ChannelTuning& tuning, const GripProfile& profile, double lead_s, double t) {
    const double tl = t + lead_s;
    return std::max(0.0, tuning.baseline_hz + tuning.gain_index * profile.index_velocity(tl) +
                             tuning.gain_thumb * profile.thumb_velocity(tl));
}

std::vector<SpikeTrain> gen_spikes(const SynthConfig& cfg, const GripProfile& profile,
                                   std::span<const ChannelTuning> tuning) {
    if (tuning.size() != cfg.channels) throw ConfigError("synth: tuning does not match channel count");
    const double vi = profile.max_speed(true);
    const double vt = profile.max_speed(false);
    std::vector<SpikeTrain> trains;
    trains.reserve(cfg.channels);
    for (std::uint32_t c = 0; c < cfg.channels; ++c) {
        const auto& tu = tuning[c];
        const double bound = std::max(0.0, tu.baseline_hz) + std::abs(tu.gain_index) * vi + std::abs(tu.gain_thumb) * vt;
        std::vector<SpikeTimestamp> times;
        if (bound > 0.0) {
            Xoshiro256 rng(derive_seed(cfg.seed, kChannelStreamBase + c));
            double t = 0.0;
            std::int64_t last_us = -1;
            for (;;) {
                t += rng.exponential(bound);
                if (t >= cfg.duration_s) break;
                const double u = rng.uniform();
                if (u * bound >= channel_rate(tu, profile, cfg.lead_s, t)) continue;
                const auto us = static_cast<std::int64_t>(std::llround(t * 1e6));
                const double tq = static_cast<double>(us) / 1e6;
                if (us <= last_us || tq >= cfg.duration_s) continue;
                last_us = us;
                times.push_back(encode_timestamp(tq));
            }
        }
        trains.emplace_back(c, std::move(times));
    }
    return trains;
}

std::size_t SynthData::spike_count() const {
    std::size_t n = 0;
    for (const auto& t : trains) n += t.size();
    return n;
}

SynthData generate(const SynthConfig& cfg) {
    cfg.validate();
    const auto profile = GripProfile::schedule(cfg);
    auto [index, thumb] = gen_trajectories(cfg, profile);
    auto tuning = resolve_tuning(cfg);
    auto trains = gen_spikes(cfg, profile, tuning);
    return {std::move(index), std::move(thumb), std::move(trains), std::move(tuning)};
}

}  // namespace neurochain
