#include "neurochain/client.hpp"

#include "neurochain/errors.hpp"

#include <algorithm>

namespace neurochain {

Client Client::connect(const Endpoint& to, Millis timeout) { return Client(connect_tcp(to, timeout), timeout); }

WireMessage Client::request(WireMessage msg) {
    const std::uint32_t seq = ++seq_;
    std::visit(
        [seq](auto& m) {
            if constexpr (requires { m.seq; }) m.seq = seq;
        },
        msg);
    sock_.send_all(serialize(msg), timeout_);
    pending_.push_back(seq);

    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
        auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now());
        auto line = reader_.read_line(sock_, std::max(left, Millis(0)));
        if (!line) throw TransportError("no reply to seq " + std::to_string(seq) + " within " +
                                        std::to_string(timeout_.count()) + " ms");
        const std::uint32_t owner = pending_.front();
        pending_.pop_front();
        WireMessage reply;
        try {
            reply = parse(*line);
        } catch (const ParseError& e) {
            throw TransportError(std::string("malformed reply: ") + e.what());
        }
        if (owner != seq) continue;
        if (auto* err = std::get_if<Err>(&reply)) throw ProtocolError(err->code, err->text);
        if (sequence_of(reply) != seq)
            throw TransportError("reply echoes seq " + std::to_string(sequence_of(reply)) + ", expected " +
                                 std::to_string(seq));
        return reply;
    }
}

std::uint32_t Client::ack(WireMessage msg) {
    auto reply = request(std::move(msg));
    if (!std::holds_alternative<Ack>(reply)) throw TransportError("expected ACK");
    return seq_;
}

std::uint32_t Client::send_target(double distance_mm, std::uint64_t t_ms) {
    return ack(Target{0, t_ms, Millimeters3::from_mm(distance_mm)});
}

State Client::poll_state() {
    auto reply = request(StateQuery{});
    if (auto* s = std::get_if<State>(&reply)) return *s;
    throw TransportError("expected STATE");
}

std::uint32_t Client::send_command(CommandName name, Speed speed, ActionLength length) {
    return ack(Command{0, name, speed, length});
}

std::uint32_t Client::set_mode(Mode mode) { return ack(ModeSwitch{0, mode}); }

}  // namespace neurochain
