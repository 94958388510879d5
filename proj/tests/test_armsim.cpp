#include "neurochain/armsim.hpp"
#include "neurochain/errors.hpp"
#include "neurochain/kvconfig.hpp"
#include "neurochain/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <sstream>

using namespace neurochain;

namespace {

ArmConfig instant(Mode mode = Mode::Hand) {
    ArmConfig cfg;
    cfg.command_latency_ms = 0;
    cfg.feedback_latency_ms = 0;
    cfg.start_mode = mode;
    return cfg;
}

Command cmd(CommandName name, Speed speed = Speed::High, ActionLength length = ActionLength::Short) {
    return {0, name, speed, length};
}

int protocol_code(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ProtocolError& e) {
        return e.code();
    }
    return 0;
}

}  // namespace

TEST_CASE("forward at full speed for a long action moves 0.30 m") {
    ArmSim sim(instant(Mode::Arm));
    sim.submit(cmd(CommandName::Forward, Speed::High, ActionLength::Long));
    sim.advance(1500);
    CHECK(sim.state().position.x() == doctest::Approx(0.30).epsilon(1e-12));
    CHECK(sim.state().position.y() == 0.0);
    CHECK(sim.state().position.z() == 0.0);
}

TEST_CASE("low speed and diagonals") {
    ArmSim sim(instant(Mode::Arm));
    sim.submit(cmd(CommandName::ForwardLeft, Speed::Low, ActionLength::Long));
    sim.advance(1000);
    const double leg = 0.30 * 0.25 / std::sqrt(2.0);
    CHECK(sim.state().position.x() == doctest::Approx(leg));
    CHECK(sim.state().position.y() == doctest::Approx(leg));
    CHECK(sim.state().position.norm() == doctest::Approx(0.075));
}

TEST_CASE("refusals") {
    auto cfg = instant(Mode::Arm);
    cfg.start_powered = false;
    ArmSim off(cfg);
    for (std::size_t i = 1; i < kCommandCount; ++i)
        CHECK(protocol_code([&] { off.submit(cmd(static_cast<CommandName>(i))); }) == 409);
    CHECK(protocol_code([&] { off.submit_target(5.0); }) == 409);
    CHECK(protocol_code([&] { off.submit(cmd(CommandName::OnOff)); }) == 0);
    // Power-on is still queued, so the next motion is checked against it.
    CHECK(protocol_code([&] { off.submit(cmd(CommandName::Left)); }) == 0);

    ArmSim hand(instant(Mode::Hand));
    CHECK(protocol_code([&] { hand.submit(cmd(CommandName::Left)); }) == 409);
    CHECK(protocol_code([&] { hand.submit(cmd(CommandName::Forward)); }) == 0);
    ArmSim arm(instant(Mode::Arm));
    CHECK(protocol_code([&] { arm.submit_target(5.0); }) == 409);
    CHECK(protocol_code([&] { arm.submit_velocity(1.0); }) == 409);
}

TEST_CASE("mode switch toggles") {
    ArmSim sim(instant(Mode::Hand));
    sim.submit(cmd(CommandName::HandArmSwitch));
    sim.submit(cmd(CommandName::HandArmSwitch));
    sim.advance(10);
    CHECK(sim.state().mode == Mode::Hand);
    sim.submit(ModeSwitch{0, Mode::Arm});
    sim.advance(2);
    CHECK(sim.state().mode == Mode::Arm);
}

TEST_CASE("latches") {
    ArmSim sim(instant());
    sim.submit(cmd(CommandName::LowSpeed));
    sim.submit(cmd(CommandName::LongAction));
    sim.advance(2);
    CHECK(sim.state().speed == Speed::Low);
    CHECK(sim.state().length == ActionLength::Long);
}

TEST_CASE("hand motions open and close the aperture") {
    ArmSim sim(instant());
    sim.submit(cmd(CommandName::Forward));  // 40 mm/s for 200 ms
    sim.advance(400);
    CHECK(sim.state().aperture_mm() == doctest::Approx(8.0));
    CHECK(sim.state().index_mm == doctest::Approx(4.0));
    sim.submit(cmd(CommandName::Down, Speed::Low));  // -10 mm/s for 200 ms
    sim.advance(400);
    CHECK(sim.state().aperture_mm() == doctest::Approx(6.0));
}

TEST_CASE("finger velocity") {
    ArmSim sim(instant());
    sim.submit_velocity(0.0);
    sim.advance(100);
    CHECK(sim.state().aperture_mm() == 0.0);

    sim.submit_velocity(12.5);
    sim.advance(500);
    CHECK(std::abs(sim.state().aperture_mm() - 12.5 * 0.5) <= 1e-9);

    ArmSim fast(instant());
    fast.submit_velocity(1000.0);
    fast.advance(100);
    CHECK(fast.state().aperture_mm() == doctest::Approx(40.0 * 0.1));
    fast.advance(5000);
    CHECK(fast.state().index_mm == 20.0);
    CHECK(fast.state().thumb_mm == 20.0);
}

TEST_CASE("stepping") {
    SUBCASE("idle") {
        ArmSim sim(instant());
        const auto before = sim.state();
        sim.advance(1000);
        CHECK(sim.state() == before);
    }
    SUBCASE("program expiring mid-step integrates up to expiry") {
        ArmSim sim(instant(Mode::Arm));
        sim.submit(cmd(CommandName::Up));  // 0.30 m/s until t = 200 ms
        sim.step(150);
        CHECK(sim.state().position.z() == doctest::Approx(0.30 * 0.150));
        sim.step(150);
        CHECK(sim.state().position.z() == doctest::Approx(0.30 * 0.200));
        sim.step(150);
        CHECK(sim.state().position.z() == doctest::Approx(0.30 * 0.200));
    }
    CHECK_THROWS_AS(ArmSim(instant()).step(0), ConfigError);
}

TEST_CASE("random steps keep the arm inside its limits") {
    ArmSim sim(instant(Mode::Arm));
    Xoshiro256 rng(11);
    for (int i = 0; i < 10000; ++i) {
        try {
            if (rng.uniform() < 0.3) sim.submit(cmd(static_cast<CommandName>(rng.next() % 16), Speed::High, ActionLength::Long));
            if (rng.uniform() < 0.1) sim.submit_target(rng.uniform() * 80.0);
        } catch (const ProtocolError&) {
        }
        sim.step(static_cast<std::int64_t>(1 + rng.next() % 50));
        const auto& s = sim.state();
        REQUIRE(s.position.norm() <= 0.9 + 1e-12);
        REQUIRE(s.index_mm >= 0.0);
        REQUIRE(s.index_mm <= 20.0);
        REQUIRE(s.thumb_mm >= 0.0);
        REQUIRE(s.thumb_mm <= 20.0);
    }
}

TEST_CASE("latency queues") {
    ArmConfig cfg;  // 150 ms each way
    ArmSim sim(cfg);
    sim.submit_velocity(10.0);
    sim.advance(150);
    CHECK(sim.state().aperture_mm() == 0.0);
    sim.advance(100);
    CHECK(sim.state().aperture_mm() == doctest::Approx(1.0));
    // Feedback shows the state from 150 ms ago.
    CHECK(sim.feedback().t_ms == 100);
    CHECK(sim.feedback().state.aperture_mm() == 0.0);
    sim.advance(150);
    CHECK(sim.feedback().t_ms == 250);
    CHECK(sim.feedback().state.aperture_mm() == doctest::Approx(1.0));

    LatencyQueue<int> q(30);
    q.push(0, 1);
    q.push(5, 2);
    CHECK(!q.pop_due(29));
    CHECK(q.pop_due(30) == 1);
    CHECK(!q.pop_due(34));
    CHECK(q.pop_due(35) == 2);
}

TEST_CASE("target servo reaches the request") {
    ArmSim sim(instant());
    sim.submit_target(7.5);
    sim.advance(1000);
    CHECK(std::abs(sim.state().aperture_mm() - 7.5) < 1e-3);
    CHECK(sim.telemetry().back().requested_mm == 7.5);
}

TEST_CASE("sequences") {
    auto record = [](ArmSim& sim) {
        sim.start_recording("wave");
        sim.submit(cmd(CommandName::Forward, Speed::High, ActionLength::Short));
        sim.advance(300);
        sim.submit(cmd(CommandName::Left, Speed::Low, ActionLength::Long));
        sim.advance(1100);
        sim.submit(cmd(CommandName::Up, Speed::High, ActionLength::Short));
        sim.advance(300);
        sim.stop_recording();
    };

    SUBCASE("recorded offsets") {
        ArmSim sim(instant(Mode::Arm));
        record(sim);
        const auto* seq = sim.sequence("wave");
        REQUIRE(seq);
        REQUIRE(seq->entries.size() == 3);
        CHECK(seq->entries[0].offset_ms == 0);
        CHECK(seq->entries[1].offset_ms == 300);
        CHECK(seq->entries[2].offset_ms == 1400);
    }
    SUBCASE("replay from the same start is bit-identical") {
        ArmSim a(instant(Mode::Arm)), b(instant(Mode::Arm));
        record(a);
        b.store_sequence("wave", *a.sequence("wave"));
        ArmSim c(instant(Mode::Arm));
        c.store_sequence("wave", *a.sequence("wave"));
        b.replay("wave");
        c.replay("wave");
        b.advance(2000);
        c.advance(2000);
        CHECK(b.state() == c.state());
        CHECK(b.state().position == a.state().position);
    }
    SUBCASE("replay from elsewhere gives the same displacement") {
        ArmSim a(instant(Mode::Arm));
        record(a);
        const Eigen::Vector3d moved = a.state().position;
        ArmSim b(instant(Mode::Arm));
        b.submit(cmd(CommandName::Backward, Speed::Low, ActionLength::Long));
        b.advance(1200);
        const Eigen::Vector3d start = b.state().position;
        b.store_sequence("wave", *a.sequence("wave"));
        b.replay("wave");
        CHECK(b.replaying());
        CHECK(protocol_code([&] { b.replay("wave"); }) == 409);
        b.advance(2000);
        CHECK(!b.replaying());
        CHECK((b.state().position - start - moved).norm() < 1e-12);
    }
    SUBCASE("empty sequence") {
        ArmSim sim(instant(Mode::Arm));
        sim.start_recording("empty");
        sim.advance(100);
        sim.stop_recording();
        const auto before = sim.state();
        sim.replay("empty");
        sim.advance(500);
        CHECK(sim.state() == before);
    }
    SUBCASE("store management") {
        ArmSim sim(instant(Mode::Arm));
        sim.store_sequence("a", {});
        sim.store_sequence("b", {});
        CHECK(protocol_code([&] { sim.rename("a", "b"); }) == 409);
        CHECK(protocol_code([&] { sim.rename("zz", "c"); }) == 409);
        sim.rename("a", "c");
        CHECK(sim.sequences() == std::vector<std::string>{"b", "c"});
        CHECK(protocol_code([&] { sim.replay("a"); }) == 409);
        for (int i = 0; i < 6; ++i) sim.store_sequence("s" + std::to_string(i), {});
        CHECK(protocol_code([&] { sim.store_sequence("full", {}); }) == 409);
        CHECK(protocol_code([&] { sim.start_recording("full"); }) == 409);
        CHECK(protocol_code([&] { sim.start_recording("bad name"); }) == 400);
    }
}

TEST_CASE("arm config") {
    std::istringstream in("command_latency_ms = 20\nfeedback_latency_ms = 30\nstart_mode = Arm\n");
    const auto cfg = ArmConfig::from_doc(KeyValueDoc::parse(in));
    CHECK(cfg.command_latency_ms == 20);
    CHECK(cfg.feedback_latency_ms == 30);
    CHECK(cfg.start_mode == Mode::Arm);
    ArmConfig bad;
    bad.tick_ms = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    std::istringstream wrong("start_mode = Leg\n");
    CHECK_THROWS_AS(ArmConfig::from_doc(KeyValueDoc::parse(wrong)), ConfigError);
}

TEST_CASE("telemetry csv") {
    ArmSim sim(instant());
    sim.submit_target(2.0);
    sim.advance(4);
    std::ostringstream out;
    sim.write_telemetry(out);
    CHECK(out.str().rfind("t_ms,requested_mm,actual_mm\n2,2.000,", 0) == 0);
}
