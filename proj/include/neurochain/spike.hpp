#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace neurochain {

/// Event time as unsigned 32:32 fixed point seconds: the upper 32 bits hold
/// whole seconds, the lower 32 bits the binary fraction.
///
/// All interval tests in this library compare the exact real value a raw
/// timestamp encodes (`seconds()`, which is exact for times below 2^21 s)
/// against interval bounds computed in double precision.
class SpikeTimestamp {
public:
    static constexpr double kScale = 4294967296.0;  // 2^32

    constexpr SpikeTimestamp() = default;
    static constexpr SpikeTimestamp from_raw(std::uint64_t raw) { return SpikeTimestamp(raw); }

    constexpr std::uint64_t raw() const { return raw_; }
    double seconds() const { return static_cast<double>(raw_) / kScale; }

    friend constexpr auto operator<=>(SpikeTimestamp, SpikeTimestamp) = default;

private:
    constexpr explicit SpikeTimestamp(std::uint64_t raw) : raw_(raw) {}
    std::uint64_t raw_ = 0;
};

/// round(t * 2^32), halves away from zero. Throws RangeError outside [0, 2^32).
SpikeTimestamp encode_timestamp(double seconds);
inline double decode_timestamp(SpikeTimestamp ts) { return ts.seconds(); }

struct SpikeEvent {
    std::uint32_t channel = 0;
    SpikeTimestamp time;

    friend bool operator==(const SpikeEvent&, const SpikeEvent&) = default;
};

/// Single-channel train with strictly increasing times.
class SpikeTrain {
public:
    SpikeTrain() = default;
    /// Throws DataError on duplicate or decreasing times.
    SpikeTrain(std::uint32_t channel, std::vector<SpikeTimestamp> times);
    static SpikeTrain from_seconds(std::uint32_t channel, std::span<const double> seconds);

    std::uint32_t channel() const { return channel_; }
    std::span<const SpikeTimestamp> times() const { return times_; }
    std::size_t size() const { return times_.size(); }
    bool empty() const { return times_.empty(); }

    /// Number of spikes whose time lies in [lo, hi).
    std::size_t count_in(double lo, double hi) const;
    /// Spikes in [lo, hi) as a subspan.
    std::span<const SpikeTimestamp> range(double lo, double hi) const;

    /// Appends a spike; must be later than the last one.
    void push_back(SpikeTimestamp t);
    /// Drops every spike earlier than `before`.
    void discard_before(double before);

    friend bool operator==(const SpikeTrain&, const SpikeTrain&) = default;

private:
    std::uint32_t channel_ = 0;
    std::vector<SpikeTimestamp> times_;
};

/// Ordered set of channel ids, all below the stream's channel count.
class ChannelSet {
public:
    ChannelSet() = default;
    /// Throws ConfigError on duplicates or ids >= channel_count.
    ChannelSet(std::vector<std::uint32_t> ids, std::uint32_t channel_count);
    static ChannelSet all(std::uint32_t channel_count);

    std::span<const std::uint32_t> ids() const { return ids_; }
    std::uint32_t channel_count() const { return channel_count_; }
    bool contains(std::uint32_t id) const;
    ChannelSet intersect(const ChannelSet& other) const;

private:
    std::vector<std::uint32_t> ids_;
    std::vector<bool> member_;
    std::uint32_t channel_count_ = 0;
};

/// Events of a stream over [start, end), sorted by time.
struct SpikeBlock {
    SpikeTimestamp start;
    SpikeTimestamp end;
    std::vector<SpikeEvent> events;

    /// Throws DataError when events are unsorted or out of bounds.
    void validate() const;
    friend bool operator==(const SpikeBlock&, const SpikeBlock&) = default;
};

SpikeBlock select_channels(const SpikeBlock& block, const ChannelSet& keep);

struct SpikeRecording {
    std::uint32_t channel_count = 0;
    std::vector<SpikeEvent> events;  // file order
};

/// Reads the `channel,time_s` schema. When `declared_channels` is empty the
/// channel count is one past the largest id seen.
SpikeRecording read_spike_csv(std::istream& in, std::optional<std::uint32_t> declared_channels = {});
void write_spike_csv(std::ostream& out, std::span<const SpikeTrain> trains);

/// Splits a recording into one train per channel (index = channel id).
std::vector<SpikeTrain> trains_by_channel(const SpikeRecording& rec);
/// All events of `trains` sorted by (time, channel).
std::vector<SpikeEvent> merge_events(std::span<const SpikeTrain> trains);

/// Bin k covers [t0 + k*width, t0 + (k+1)*width), the last bin is clipped at t1.
std::vector<std::size_t> bin_counts(const SpikeTrain& train, double t0, double t1, double width);

/// Spikes in [t - window, t) divided by window, in Hz.
double firing_rate(const SpikeTrain& train, double t, double window);

/// Fraction of a's spikes in [t - window, t) that have a spike of b from the
/// same window within +-delta, normalised by the larger of the two window
/// counts. Zero when both windows are empty.
double synchrony(const SpikeTrain& a, const SpikeTrain& b, double t, double window, double delta);

/// Sample clock shared by every 500 Hz signal: sample k sits at k / rate.
inline double sample_time(std::int64_t index, double rate_hz) {
    return static_cast<double>(index) / rate_hz;
}

/// Uniformly sampled finger position in millimetres.
struct FingerTrajectory {
    std::int64_t first_index = 0;
    double rate_hz = 500.0;
    std::vector<double> positions_mm;

    double start_s() const { return sample_time(first_index, rate_hz); }
    double period_s() const { return 1.0 / rate_hz; }
    std::size_t size() const { return positions_mm.size(); }
    /// Sub-trajectory of samples [offset, offset + count).
    FingerTrajectory slice(std::size_t offset, std::size_t count) const;
};

struct PositionTable {
    FingerTrajectory index;
    FingerTrajectory thumb;
};

/// `time_s,index_mm,thumb_mm` at a fixed 500 Hz. Throws ParseError/DataError.
PositionTable read_position_csv(std::istream& in, double rate_hz = 500.0);
void write_position_csv(std::ostream& out, const FingerTrajectory& index, const FingerTrajectory& thumb);

}  // namespace neurochain
