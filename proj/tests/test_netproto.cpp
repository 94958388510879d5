#include "neurochain/errors.hpp"
#include "neurochain/netproto.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace neurochain;

TEST_CASE("serialize examples") {
    CHECK(serialize(Target{42, 1000, Millimeters3::from_mm(12.5)}) == "TARGET 42 1000 12.500\n");
    CHECK(serialize(Ack{42}) == "ACK 42\n");
    CHECK(serialize(Command{7, CommandName::Forward, Speed::High, ActionLength::Short}) == "CMD 7 Forward High Short\n");
    CHECK(serialize(ModeSwitch{3, Mode::Arm}) == "MODE 3 Arm\n");
    CHECK(serialize(StateQuery{9}) == "GET 9 STATE\n");
    CHECK(serialize(State{9, 250, Millimeters3::from_mm(1.5), Millimeters3::from_mm(2.25), Millimeters3::from_mm(3.75)}) ==
          "STATE 9 250 1.500 2.250 3.750\n");
    CHECK(serialize(SequenceControl{4, SequenceControl::Op::Rename, "a", "b"}) == "SEQ 4 RENAME a b\n");
    CHECK(serialize(SequenceList{4, {"grab", "wave"}}) == "SEQS 4 grab wave\n");
    CHECK(serialize(SequenceList{4, {}}) == "SEQS 4\n");
    CHECK(serialize(Err{409, "arm is not powered"}) == "ERR 409 arm is not powered\n");
}

TEST_CASE("parse examples") {
    CHECK(parse("TARGET 42 1000 12.500\n") == WireMessage{Target{42, 1000, Millimeters3::from_mm(12.5)}});
    CHECK(parse("CMD 7 Forward High Short\n") ==
          WireMessage{Command{7, CommandName::Forward, Speed::High, ActionLength::Short}});
    CHECK(parse("TARGET  42   1000 12.500") == WireMessage{Target{42, 1000, Millimeters3::from_mm(12.5)}});
    CHECK(parse("ERR 400 bad  line\n") == WireMessage{Err{400, "bad line"}});
    CHECK(parse("SEQ 1 LIST\n") == WireMessage{SequenceControl{1, SequenceControl::Op::List, "", ""}});
    CHECK(parse("TARGET 1 2 3.5\n") == WireMessage{Target{1, 2, Millimeters3::from_mm(3.5)}});
    CHECK(parse("ERR 503\n") == WireMessage{Err{503, ""}});
}

TEST_CASE("parse rejects malformed lines") {
    for (std::string line : {
             "TARGET nonsense\n",
             "",
             "\n",
             "HELLO 1\n",
             "TARGET 1 2\n",
             "TARGET 1 2 3.5 4\n",
             "TARGET -1 2 3.5\n",
             "TARGET 1 2 -3.5\n",
             "TARGET 1 2 1000.000\n",
             "TARGET 1 2 3.1234\n",
             "TARGET 99999999999 2 3.5\n",
             "TARGET 1 2 3.5\r\n",
             "CMD 1 Jump High Short\n",
             "CMD 1 Forward Medium Short\n",
             "MODE 1 Leg\n",
             "GET 1 POSITION\n",
             "SEQ 1 RECORD\n",
             "SEQ 1 RECORD name_that_is_too_long\n",
             "SEQ 1 RENAME a\n",
             "ERR 42 short code\n",
             "ack 1\n",
             "ACK 1\nACK 2\n",
         }) {
        CAPTURE(line);
        CHECK_THROWS_AS(parse(line), ParseError);
    }
    CHECK_THROWS_AS(parse(std::string(200, 'A')), ParseError);
}

TEST_CASE("encode rejects out-of-range fields") {
    CHECK_THROWS_AS(Millimeters3::from_mm(std::nan("")), EncodeError);
    CHECK_THROWS_AS(serialize(Target{1, 1, Millimeters3::from_thousandths(-1)}), EncodeError);
    CHECK_THROWS_AS(serialize(Target{1, 1, Millimeters3::from_thousandths(1'000'000)}), EncodeError);
    CHECK_THROWS_AS(serialize(Err{99, "x"}), EncodeError);
    CHECK_THROWS_AS(serialize(Err{400, "two  spaces"}), EncodeError);
    CHECK_THROWS_AS(serialize(SequenceControl{1, SequenceControl::Op::Record, "bad name", ""}), EncodeError);
    CHECK_THROWS_AS(serialize(SequenceList{1, std::vector<std::string>(20, "abcdefghijkl")}), EncodeError);
}

TEST_CASE("make_err fits any text into one line") {
    const auto e = make_err(500, std::string(300, 'x') + "\n\t oops");
    const auto line = serialize(e);
    CHECK(line.size() <= kMaxLineBytes);
    CHECK(std::holds_alternative<Err>(parse(line)));
    CHECK(serialize(make_err(409, "  spaced\tout  ")) == "ERR 409 spaced out\n");
}

TEST_CASE("sequence numbers") {
    CHECK(sequence_of(Target{5, 0, {}}) == 5);
    CHECK(sequence_of(State{6, 0, {}, {}, {}}) == 6);
    CHECK(sequence_of(Err{400, "x"}) == 0);
}

TEST_CASE("command vocabulary") {
    CHECK(kCommandNames.size() == 16);
    for (std::size_t i = 0; i < kCommandCount; ++i) {
        const auto name = static_cast<CommandName>(i);
        const auto line = "CMD 1 " + std::string(to_string(name)) + " Low Long\n";
        CHECK(parse(line) == WireMessage{Command{1, name, Speed::Low, ActionLength::Long}});
    }
}

TEST_CASE("round-trip fuzz") {
    Xoshiro256 rng(2024);
    for (int i = 0; i < 20000; ++i) {
        const auto msg = testing::random_message(rng);
        const auto line = serialize(msg);
        REQUIRE(line.size() <= kMaxLineBytes);
        REQUIRE(line.back() == '\n');
        REQUIRE(parse(line) == msg);
    }
}

TEST_CASE("mutated lines parse or fail cleanly") {
    Xoshiro256 rng(7);
    for (int i = 0; i < 5000; ++i) {
        const auto line = testing::mutate(rng, serialize(testing::random_message(rng)));
        try {
            const auto msg = parse(line);
            CHECK(serialize(msg).size() <= kMaxLineBytes);
        } catch (const ParseError&) {
        }
    }
}
