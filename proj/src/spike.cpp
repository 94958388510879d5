#include "neurochain/spike.hpp"

#include "neurochain/errors.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace neurochain {

SpikeTimestamp encode_timestamp(double seconds) {
    if (!(seconds >= 0.0) || !(seconds < SpikeTimestamp::kScale))
        throw RangeError("timestamp out of range [0, 2^32) s: " + std::to_string(seconds));
    // t * 2^32 is exact in binary floating point; std::round rounds halves away from zero.
    return SpikeTimestamp::from_raw(static_cast<std::uint64_t>(std::round(seconds * SpikeTimestamp::kScale)));
}

// ---------------------------------------------------------------------------
// SpikeTrain

namespace {

void check_strictly_increasing(std::uint32_t channel, std::span<const SpikeTimestamp> times) {
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (times[i] <= times[i - 1])
            throw DataError("channel " + std::to_string(channel) + ": spike times not strictly increasing at " +
                            std::to_string(times[i].seconds()) + " s");
    }
}

auto lower(std::span<const SpikeTimestamp> times, double t) {
    return std::partition_point(times.begin(), times.end(), [t](SpikeTimestamp s) { return s.seconds() < t; });
}

}  // namespace

SpikeTrain::SpikeTrain(std::uint32_t channel, std::vector<SpikeTimestamp> times)
    : channel_(channel), times_(std::move(times)) {
    check_strictly_increasing(channel_, times_);
}

SpikeTrain SpikeTrain::from_seconds(std::uint32_t channel, std::span<const double> seconds) {
    std::vector<SpikeTimestamp> ts;
    ts.reserve(seconds.size());
    for (double s : seconds) ts.push_back(encode_timestamp(s));
    return SpikeTrain(channel, std::move(ts));
}

std::span<const SpikeTimestamp> SpikeTrain::range(double lo, double hi) const {
    std::span<const SpikeTimestamp> all(times_);
    if (!(lo < hi)) return {};
    auto first = lower(all, lo);
    auto last = std::partition_point(first, all.end(), [hi](SpikeTimestamp s) { return s.seconds() < hi; });
    return {first, last};
}

std::size_t SpikeTrain::count_in(double lo, double hi) const { return range(lo, hi).size(); }

void SpikeTrain::push_back(SpikeTimestamp t) {
    if (!times_.empty() && t <= times_.back())
        throw DataError("channel " + std::to_string(channel_) + ": spike appended out of order");
    times_.push_back(t);
}

void SpikeTrain::discard_before(double before) {
    std::span<const SpikeTimestamp> all(times_);
    const auto drop = lower(all, before) - all.begin();
    times_.erase(times_.begin(), times_.begin() + drop);
}

// ---------------------------------------------------------------------------
// ChannelSet

ChannelSet::ChannelSet(std::vector<std::uint32_t> ids, std::uint32_t channel_count)
    : ids_(std::move(ids)), member_(channel_count, false), channel_count_(channel_count) {
    for (auto id : ids_) {
        if (id >= channel_count)
            throw ConfigError("channel id " + std::to_string(id) + " outside [0, " + std::to_string(channel_count) + ")");
        if (member_[id]) throw ConfigError("duplicate channel id " + std::to_string(id));
        member_[id] = true;
    }
}

ChannelSet ChannelSet::all(std::uint32_t channel_count) {
    std::vector<std::uint32_t> ids(channel_count);
    for (std::uint32_t i = 0; i < channel_count; ++i) ids[i] = i;
    return ChannelSet(std::move(ids), channel_count);
}

bool ChannelSet::contains(std::uint32_t id) const { return id < channel_count_ && member_[id]; }

ChannelSet ChannelSet::intersect(const ChannelSet& other) const {
    std::vector<std::uint32_t> ids;
    for (auto id : ids_)
        if (other.contains(id)) ids.push_back(id);
    return ChannelSet(std::move(ids), channel_count_);
}

// ---------------------------------------------------------------------------
// SpikeBlock

void SpikeBlock::validate() const {
    if (end < start) throw DataError("spike block ends before it starts");
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto t = events[i].time;
        if (t < start || t >= end) throw DataError("spike event outside its block interval");
        if (i > 0 && t < events[i - 1].time) throw DataError("spike block events not sorted by time");
    }
}

SpikeBlock select_channels(const SpikeBlock& block, const ChannelSet& keep) {
    SpikeBlock out{block.start, block.end, {}};
    out.events.reserve(block.events.size());
    for (const auto& ev : block.events) {
        if (ev.channel >= keep.channel_count())
            throw ConfigError("event channel " + std::to_string(ev.channel) + " outside the selector's channel range");
        if (keep.contains(ev.channel)) out.events.push_back(ev);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

SpikeRecording read_spike_csv(std::istream& in, std::optional<std::uint32_t> declared_channels) {
    SpikeRecording rec;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("missing header `channel,time_s`", 1);
    ++lineno;
    if (text::trim(line) != "channel,time_s") throw ParseError("expected header `channel,time_s`", lineno);

    std::vector<SpikeTimestamp> last;  // per channel, for monotonicity
    std::vector<bool> seen;
    std::uint32_t max_id = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto row = text::trim(line);
        if (row.empty()) continue;
        auto comma = row.find(',');
        if (comma == std::string_view::npos) throw ParseError("expected `<channel>,<time_s>`", lineno);
        auto ch = text::parse_uint(row.substr(0, comma));
        auto t = text::parse_double(row.substr(comma + 1));
        if (!ch || *ch > 0xFFFFFFFFull) throw ParseError("bad channel id", lineno);
        if (!t) throw ParseError("bad time value", lineno);
        const auto id = static_cast<std::uint32_t>(*ch);
        if (declared_channels && id >= *declared_channels)
            throw DataError("line " + std::to_string(lineno) + ": channel " + std::to_string(id) +
                            " outside declared count " + std::to_string(*declared_channels));
        SpikeTimestamp ts;
        try {
            ts = encode_timestamp(*t);
        } catch (const RangeError& e) {
            throw ParseError(e.what(), lineno);
        }
        if (id >= last.size()) {
            last.resize(id + 1);
            seen.resize(id + 1, false);
        }
        if (seen[id] && ts <= last[id])
            throw DataError("line " + std::to_string(lineno) + ": channel " + std::to_string(id) +
                            " times not strictly increasing");
        seen[id] = true;
        last[id] = ts;
        max_id = std::max(max_id, id);
        rec.events.push_back({id, ts});
    }
    rec.channel_count = declared_channels ? *declared_channels : (rec.events.empty() ? 0 : max_id + 1);
    return rec;
}

void write_spike_csv(std::ostream& out, std::span<const SpikeTrain> trains) {
    out << "channel,time_s\n";
    char buf[64];
    for (const auto& ev : merge_events(trains)) {
        int n = std::snprintf(buf, sizeof buf, "%u,%.6f\n", ev.channel, ev.time.seconds());
        out.write(buf, n);
    }
}

std::vector<SpikeTrain> trains_by_channel(const SpikeRecording& rec) {
    std::vector<std::vector<SpikeTimestamp>> times(rec.channel_count);
    for (const auto& ev : rec.events) {
        if (ev.channel >= rec.channel_count) throw DataError("event channel outside recording channel count");
        times[ev.channel].push_back(ev.time);
    }
    std::vector<SpikeTrain> trains;
    trains.reserve(rec.channel_count);
    for (std::uint32_t c = 0; c < rec.channel_count; ++c) trains.emplace_back(c, std::move(times[c]));
    return trains;
}

std::vector<SpikeEvent> merge_events(std::span<const SpikeTrain> trains) {
    std::vector<SpikeEvent> events;
    std::size_t total = 0;
    for (const auto& tr : trains) total += tr.size();
    events.reserve(total);
    for (const auto& tr : trains)
        for (auto t : tr.times()) events.push_back({tr.channel(), t});
    std::sort(events.begin(), events.end(), [](const SpikeEvent& a, const SpikeEvent& b) {
        return a.time != b.time ? a.time < b.time : a.channel < b.channel;
    });
    return events;
}

// ---------------------------------------------------------------------------
// Features

std::vector<std::size_t> bin_counts(const SpikeTrain& train, double t0, double t1, double width) {
    if (!(t0 < t1) || !(width > 0.0)) throw ConfigError("bin_counts requires t0 < t1 and width > 0");
    const auto nbins = static_cast<std::size_t>(std::ceil((t1 - t0) / width));
    std::vector<std::size_t> counts;
    counts.reserve(nbins);
    for (std::size_t k = 0;; ++k) {
        const double lo = t0 + static_cast<double>(k) * width;
        if (!(lo < t1)) break;
        const double hi = std::min(t0 + static_cast<double>(k + 1) * width, t1);
        counts.push_back(train.count_in(lo, hi));
    }
    return counts;
}

double firing_rate(const SpikeTrain& train, double t, double window) {
    if (!(window > 0.0)) throw ConfigError("firing_rate requires window > 0");
    return static_cast<double>(train.count_in(t - window, t)) / window;
}

double synchrony(const SpikeTrain& a, const SpikeTrain& b, double t, double window, double delta) {
    if (!(window > 0.0) || !(delta >= 0.0)) throw ConfigError("synchrony requires window > 0 and delta >= 0");
    const auto sa = a.range(t - window, t);
    const auto sb = b.range(t - window, t);
    const std::size_t denom = std::max(sa.size(), sb.size());
    if (denom == 0) return 0.0;
    std::size_t coincident = 0;
    auto it = sb.begin();
    for (auto s : sa) {
        const double ta = s.seconds();
        while (it != sb.end() && it->seconds() < ta - delta) ++it;
        if (it != sb.end() && it->seconds() <= ta + delta) ++coincident;
    }
    return static_cast<double>(coincident) / static_cast<double>(denom);
}

// ---------------------------------------------------------------------------
// Positions

FingerTrajectory FingerTrajectory::slice(std::size_t offset, std::size_t count) const {
    if (offset + count > positions_mm.size()) throw ConfigError("trajectory slice out of range");
    FingerTrajectory out{first_index + static_cast<std::int64_t>(offset), rate_hz, {}};
    out.positions_mm.assign(positions_mm.begin() + static_cast<std::ptrdiff_t>(offset),
                            positions_mm.begin() + static_cast<std::ptrdiff_t>(offset + count));
    return out;
}

PositionTable read_position_csv(std::istream& in, double rate_hz) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw ParseError("missing header `time_s,index_mm,thumb_mm`", 1);
    if (text::trim(line) != "time_s,index_mm,thumb_mm") throw ParseError("expected header `time_s,index_mm,thumb_mm`", 1);
    PositionTable table;
    table.index.rate_hz = table.thumb.rate_hz = rate_hz;
    bool first = true;
    std::int64_t expected = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto row = text::trim(line);
        if (row.empty()) continue;
        auto fields = text::split(row, ',');
        if (fields.size() != 3) throw ParseError("expected 3 fields", lineno);
        auto t = text::parse_double(fields[0]);
        auto yi = text::parse_double(fields[1]);
        auto yt = text::parse_double(fields[2]);
        if (!t || !yi || !yt) throw ParseError("bad number", lineno);
        const auto idx = static_cast<std::int64_t>(std::llround(*t * rate_hz));
        if (std::abs(*t * rate_hz - static_cast<double>(idx)) > 1e-3)
            throw DataError("line " + std::to_string(lineno) + ": time not on the sampling grid");
        if (first) {
            table.index.first_index = table.thumb.first_index = idx;
            expected = idx;
            first = false;
        }
        if (idx != expected) throw DataError("line " + std::to_string(lineno) + ": non-uniform sampling");
        ++expected;
        table.index.positions_mm.push_back(*yi);
        table.thumb.positions_mm.push_back(*yt);
    }
    return table;
}

void write_position_csv(std::ostream& out, const FingerTrajectory& index, const FingerTrajectory& thumb) {
    if (index.size() != thumb.size() || index.first_index != thumb.first_index)
        throw ConfigError("index and thumb trajectories are not aligned");
    out << "time_s,index_mm,thumb_mm\n";
    char buf[96];
    for (std::size_t k = 0; k < index.size(); ++k) {
        const double t = sample_time(index.first_index + static_cast<std::int64_t>(k), index.rate_hz);
        int n = std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.3f\n", t, index.positions_mm[k], thumb.positions_mm[k]);
        out.write(buf, n);
    }
}

}  // namespace neurochain
