#include "neurochain/errors.hpp"
#include "neurochain/spike.hpp"
#include "neurochain/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace neurochain;

namespace {

SpikeTrain train(std::uint32_t ch, std::vector<double> s) { return SpikeTrain::from_seconds(ch, s); }

}  // namespace

TEST_CASE("timestamp encoding") {
    CHECK(encode_timestamp(0.0).raw() == 0);
    CHECK(encode_timestamp(1.5).raw() == 0x0000000180000000ull);
    // round(5e-6 * 2^32) = round(21474.83648) computed by hand in decimal.
    CHECK(encode_timestamp(5e-6).raw() == 21475);
    CHECK(decode_timestamp(SpikeTimestamp::from_raw(0)) == 0.0);
    CHECK(decode_timestamp(SpikeTimestamp::from_raw(0x0000000180000000ull)) == 1.5);
    CHECK_THROWS_AS(encode_timestamp(-1e-9), RangeError);
    CHECK_THROWS_AS(encode_timestamp(4294967296.0), RangeError);
    CHECK_THROWS_AS(encode_timestamp(std::nan("")), RangeError);
}

TEST_CASE("timestamp round trip stays within half a tick") {
    Xoshiro256 rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double t = rng.uniform() * 2000.0;
        CHECK(std::abs(decode_timestamp(encode_timestamp(t)) - t) <= 0.5 / 4294967296.0);
    }
}

TEST_CASE("spike trains reject unsorted times") {
    CHECK_THROWS_AS(train(0, {0.2, 0.1}), DataError);
    CHECK_THROWS_AS(train(0, {0.1, 0.1}), DataError);
    auto t = train(0, {0.1});
    CHECK_THROWS_AS(t.push_back(encode_timestamp(0.05)), DataError);
    t.push_back(encode_timestamp(0.2));
    CHECK(t.size() == 2);
    t.discard_before(0.15);
    CHECK(t.size() == 1);
}

TEST_CASE("spike csv") {
    std::istringstream in("channel,time_s\n0,0.002000\n1,0.002500\n");
    const auto rec = read_spike_csv(in);
    REQUIRE(rec.events.size() == 2);
    CHECK(rec.events[0].channel == 0);
    CHECK(rec.events[1].channel == 1);
    CHECK(rec.channel_count == 2);

    std::istringstream empty("channel,time_s\n");
    CHECK(read_spike_csv(empty).events.empty());

    std::istringstream bad_header("chan,t\n");
    CHECK_THROWS_AS(read_spike_csv(bad_header), ParseError);
    std::istringstream bad_row("channel,time_s\n0,abc\n");
    CHECK_THROWS_AS(read_spike_csv(bad_row), ParseError);
    std::istringstream too_many("channel,time_s\n5,0.1\n");
    CHECK_THROWS_AS(read_spike_csv(too_many, 4), DataError);
}

TEST_CASE("spike csv of a synthetic run keeps every event") {
    SynthConfig cfg;
    const auto data = generate(cfg);
    std::stringstream io;
    write_spike_csv(io, data.trains);
    const auto rec = read_spike_csv(io, cfg.channels);
    CHECK(rec.events.size() == data.spike_count());
    const auto back = trains_by_channel(rec);
    REQUIRE(back.size() == data.trains.size());
    for (std::size_t c = 0; c < back.size(); ++c) CHECK(back[c] == data.trains[c]);
}

TEST_CASE("bin counts") {
    const auto t = train(0, {0.1, 0.2, 0.3});
    CHECK(bin_counts(t, 0.0, 0.4, 0.2) == std::vector<std::size_t>{2, 1});
    CHECK(bin_counts(SpikeTrain{}, 0.0, 1.0, 0.25) == std::vector<std::size_t>{0, 0, 0, 0});
    // Last bin clipped at t1.
    CHECK(bin_counts(t, 0.0, 0.25, 0.2) == std::vector<std::size_t>{2, 0});
    CHECK_THROWS_AS(bin_counts(t, 1.0, 0.0, 0.1), ConfigError);
    CHECK_THROWS_AS(bin_counts(t, 0.0, 1.0, 0.0), ConfigError);
}

TEST_CASE("firing rate") {
    std::vector<double> s;
    for (int i = 0; i < 10; ++i) s.push_back(0.05 + 0.1 * i);
    CHECK(firing_rate(train(0, s), 1.0, 1.0) == doctest::Approx(10.0));
    CHECK(firing_rate(SpikeTrain{}, 1.0, 1.0) == 0.0);
    CHECK_THROWS_AS(firing_rate(SpikeTrain{}, 1.0, 0.0), ConfigError);
}

TEST_CASE("synchrony") {
    const auto a = train(0, {0.01, 0.02, 0.05});
    CHECK(synchrony(a, a, 0.1, 0.1, 0.001) == 1.0);
    const auto far = train(1, {0.015, 0.035, 0.065});
    CHECK(synchrony(a, far, 0.1, 0.1, 0.002) == 0.0);
    CHECK(synchrony(SpikeTrain{}, SpikeTrain{}, 0.1, 0.1, 0.002) == 0.0);
    // Two of three spikes of `a` have a partner; the larger window count is 3.
    const auto partial = train(1, {0.0105, 0.0515});
    CHECK(synchrony(a, partial, 0.1, 0.1, 0.002) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("channel selection") {
    SpikeBlock block{encode_timestamp(0.0), encode_timestamp(0.02), {}};
    for (std::uint32_t i = 0; i < 6; ++i) block.events.push_back({i % 3, encode_timestamp(0.001 * (i + 1))});
    block.validate();
    CHECK(select_channels(block, ChannelSet::all(3)) == block);
    const auto none = select_channels(block, ChannelSet({}, 3));
    CHECK(none.events.empty());
    CHECK(none.start == block.start);
    CHECK(none.end == block.end);
    const auto zero = select_channels(block, ChannelSet({0}, 3));
    REQUIRE(zero.events.size() == 2);
    CHECK(zero.events[0] == block.events[0]);
    CHECK(zero.events[1] == block.events[3]);
    CHECK_THROWS_AS(ChannelSet({3}, 3), ConfigError);
    CHECK_THROWS_AS(ChannelSet({1, 1}, 3), ConfigError);
    CHECK_THROWS_AS(select_channels(block, ChannelSet::all(2)), ConfigError);
}

TEST_CASE("position csv") {
    FingerTrajectory index{0, 500.0, {0.0, 1.0, 2.0}};
    FingerTrajectory thumb{0, 500.0, {0.5, 0.25, 0.0}};
    std::stringstream io;
    write_position_csv(io, index, thumb);
    CHECK(io.str() == "time_s,index_mm,thumb_mm\n0.000,0.000,0.500\n0.002,1.000,0.250\n0.004,2.000,0.000\n");
    const auto table = read_position_csv(io);
    CHECK(table.index.positions_mm == index.positions_mm);
    CHECK(table.thumb.positions_mm == thumb.positions_mm);

    std::istringstream gap("time_s,index_mm,thumb_mm\n0.000,0,0\n0.004,0,0\n");
    CHECK_THROWS_AS(read_position_csv(gap), DataError);
    std::istringstream off_grid("time_s,index_mm,thumb_mm\n0.001,0,0\n");
    CHECK_THROWS_AS(read_position_csv(off_grid), DataError);
}
