#include "neurochain/client.hpp"
#include "neurochain/errors.hpp"
#include "neurochain/server.hpp"
#include "neurochain/websocket.hpp"

#include <doctest.h>

#include <chrono>
#include <thread>

using namespace neurochain;

namespace {

ServerConfig local(bool with_ws = false) {
    ServerConfig cfg;
    cfg.tcp = {"127.0.0.1", 0};
    cfg.ws_port = with_ws ? std::optional<std::uint16_t>(0) : std::nullopt;
    cfg.virtual_clock = true;
    return cfg;
}

std::string exchange(Socket& sock, LineReader& reader, const std::string& line) {
    sock.send_all(line, Millis(1000));
    auto reply = reader.read_line(sock, Millis(2000));
    REQUIRE(reply);
    return *reply;
}

}  // namespace

TEST_CASE("loopback acks echo the request seq") {
    ArmServer server(local());
    auto client = Client::connect(server.endpoint());
    for (std::uint32_t i = 1; i <= 1000; ++i) {
        const auto seq = client.send_target(static_cast<double>(i % 20), i);
        REQUIRE(seq == i);
    }
    CHECK(client.outstanding() == 0);
    CHECK(client.last_seq() == 1000);
}

TEST_CASE("first seq is 1, then 2") {
    ArmServer server(local());
    auto client = Client::connect(server.endpoint());
    CHECK(client.poll_state().seq_echo == 1);
    CHECK(client.send_target(1.0, 0) == 2);
}

TEST_CASE("fresh server reports the arm at rest") {
    ArmServer server(local());
    auto client = Client::connect(server.endpoint());
    const auto s = client.poll_state();
    CHECK(s.index.mm() == 0.0);
    CHECK(s.thumb.mm() == 0.0);
    CHECK(s.aperture.mm() == 0.0);
    CHECK(s.t_ms == 0);
}

TEST_CASE("a target settles at zero latency") {
    auto cfg = local();
    cfg.arm.command_latency_ms = 0;
    cfg.arm.feedback_latency_ms = 0;
    ArmServer server(cfg);
    auto client = Client::connect(server.endpoint());
    client.send_target(7.5, 0);
    server.advance(1000);
    const auto s = client.poll_state();
    CHECK(std::abs(s.aperture.mm() - 7.5) <= 0.001);
    CHECK(s.t_ms == 1000);
}

TEST_CASE("server down or silent gives a transport error within the timeout") {
    std::uint16_t port;
    {
        Listener probe({"127.0.0.1", 0});
        port = probe.port();
    }
    CHECK_THROWS_AS(Client::connect({"127.0.0.1", port}, Millis(200)), TransportError);

    // Accepts the connection in the backlog but never answers.
    Listener mute({"127.0.0.1", 0});
    auto client = Client::connect({"127.0.0.1", mute.port()}, Millis(200));
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(client.poll_state(), TransportError);
    const auto took = std::chrono::steady_clock::now() - t0;
    CHECK(took >= Millis(190));
    CHECK(took < Millis(1000));
}

TEST_CASE("interleaved clients keep their own seq") {
    ArmServer server(local());
    auto a = Client::connect(server.endpoint());
    auto b = Client::connect(server.endpoint());
    for (std::uint32_t i = 1; i <= 50; ++i) {
        CHECK(a.send_target(1.0, i) == i);
        CHECK(b.poll_state().seq_echo == 2 * i - 1);
        CHECK(b.send_target(2.0, i) == 2 * i);
    }
}

TEST_CASE("concurrent clients") {
    ArmServer server(local());
    std::vector<std::thread> threads;
    std::atomic<int> bad{0};
    for (int c = 0; c < 4; ++c) {
        threads.emplace_back([&] {
            try {
                auto client = Client::connect(server.endpoint());
                for (std::uint32_t i = 1; i <= 200; ++i) {
                    if (i % 2) {
                        if (client.send_target(5.0, i) != i) ++bad;
                    } else if (client.poll_state().seq_echo != i) {
                        ++bad;
                    }
                }
            } catch (const Error&) {
                ++bad;
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(bad == 0);
}

TEST_CASE("error replies") {
    ArmServer server(local());
    auto sock = connect_tcp(server.endpoint(), Millis(1000));
    LineReader reader(kMaxLineBytes);
    CHECK(exchange(sock, reader, "HELLO there\n").rfind("ERR 400 ", 0) == 0);
    CHECK(exchange(sock, reader, std::string(300, 'x') + "\n").rfind("ERR 400 ", 0) == 0);
    // Hand mode refuses sideways motion.
    CHECK(exchange(sock, reader, "CMD 1 Left High Short\n").rfind("ERR 409 ", 0) == 0);
    CHECK(exchange(sock, reader, "ACK 3\n").rfind("ERR 400 ", 0) == 0);
    CHECK(exchange(sock, reader, "GET 4 STATE\n").rfind("STATE 4 0 ", 0) == 0);

    auto client = Client::connect(server.endpoint());
    try {
        client.send_command(CommandName::Right, Speed::High, ActionLength::Short);
        FAIL("expected a refusal");
    } catch (const ProtocolError& e) {
        CHECK(e.code() == 409);
    }
    client.set_mode(Mode::Arm);
    CHECK(client.send_command(CommandName::Right, Speed::High, ActionLength::Short) == 3);
}

TEST_CASE("too many clients get 503") {
    auto cfg = local();
    cfg.max_clients = 1;
    ArmServer server(cfg);
    auto first = Client::connect(server.endpoint());
    first.poll_state();
    auto sock = connect_tcp(server.endpoint(), Millis(1000));
    LineReader reader(kMaxLineBytes);
    const auto line = reader.read_line(sock, Millis(2000));
    REQUIRE(line);
    CHECK(line->rfind("ERR 503 ", 0) == 0);
}

TEST_CASE("websocket accept key") {
    CHECK(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST_CASE("websocket carries one protocol line per frame") {
    ArmServer server(local(true));
    REQUIRE(server.ws_port() != 0);
    auto ch = ws::Channel::connect(connect_tcp({"127.0.0.1", server.ws_port()}, Millis(1000)), "127.0.0.1",
                                   Millis(1000));
    ch.send_text("TARGET 1 0 4.000\n", Millis(1000));
    CHECK(ch.read_text(Millis(2000)) == std::optional<std::string>("ACK 1\n"));
    ch.send_text("GET 2 STATE\n", Millis(1000));
    const auto reply = ch.read_text(Millis(2000));
    REQUIRE(reply);
    const auto msg = parse(*reply);
    REQUIRE(std::holds_alternative<State>(msg));
    CHECK(std::get<State>(msg).seq_echo == 2);
    ch.send_text("bogus\n", Millis(1000));
    const auto err = ch.read_text(Millis(2000));
    REQUIRE(err);
    CHECK(err->rfind("ERR 400 ", 0) == 0);
    ch.close(Millis(500));
}

TEST_CASE("sequences over the wire") {
    ArmServer server(local());
    auto client = Client::connect(server.endpoint());
    client.set_mode(Mode::Arm);
    server.advance(200);
    CHECK(std::holds_alternative<Ack>(client.request(SequenceControl{0, SequenceControl::Op::Record, "wave", ""})));
    client.send_command(CommandName::Forward, Speed::High, ActionLength::Short);
    server.advance(300);
    client.send_command(CommandName::Up, Speed::Low, ActionLength::Short);
    server.advance(300);
    client.request(SequenceControl{0, SequenceControl::Op::Stop, "", ""});

    const auto list = client.request(SequenceControl{0, SequenceControl::Op::List, "", ""});
    REQUIRE(std::holds_alternative<SequenceList>(list));
    CHECK(std::get<SequenceList>(list).names == std::vector<std::string>{"wave"});

    const auto seq = server.with_sim([](ArmSim& sim) { return *sim.sequence("wave"); });
    REQUIRE(seq.entries.size() == 2);
    const auto tick = server.with_sim([](ArmSim& sim) { return sim.config().tick_ms; });
    CHECK(std::abs(seq.entries[1].offset_ms - seq.entries[0].offset_ms - 300) <= tick);

    server.advance(500);
    const auto before = server.with_sim([](ArmSim& sim) { return sim.state().position; });
    client.request(SequenceControl{0, SequenceControl::Op::Replay, "wave", ""});
    server.advance(1000);
    const auto after = server.with_sim([](ArmSim& sim) { return sim.state().position; });
    CHECK(after.x() - before.x() == doctest::Approx(0.30 * 0.2));
    CHECK(after.z() - before.z() == doctest::Approx(0.30 * 0.25 * 0.2));

    try {
        client.request(SequenceControl{0, SequenceControl::Op::Replay, "nothing", ""});
        FAIL("expected a refusal");
    } catch (const ProtocolError& e) {
        CHECK(e.code() == 409);
    }
}
