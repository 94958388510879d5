#pragma once

#include "neurochain/netproto.hpp"
#include "neurochain/socket.hpp"

#include <deque>

namespace neurochain {

/// One connection to the arm server. Requests carry strictly increasing seq
/// numbers starting at 1 and are answered in order; a reply that belongs to
/// an earlier request which already timed out is discarded.
///
/// ProtocolError: the server answered ERR. TransportError: timeout or
/// disconnect.
class Client {
public:
    static Client connect(const Endpoint& to, Millis timeout = Millis(1000));

    void set_timeout(Millis timeout) { timeout_ = timeout; }
    Millis timeout() const { return timeout_; }

    /// Returns the seq used once the Ack arrives.
    std::uint32_t send_target(double distance_mm, std::uint64_t t_ms);
    State poll_state();
    std::uint32_t send_command(CommandName name, Speed speed, ActionLength length);
    std::uint32_t set_mode(Mode mode);
    /// Sends `msg` with its seq replaced by the next one and returns the reply.
    WireMessage request(WireMessage msg);

    std::uint32_t last_seq() const { return seq_; }
    /// Requests whose reply has not arrived yet.
    std::size_t outstanding() const { return pending_.size(); }

private:
    explicit Client(Socket sock, Millis timeout) : sock_(std::move(sock)), timeout_(timeout) {}
    std::uint32_t ack(WireMessage msg);

    Socket sock_;
    LineReader reader_{kMaxLineBytes};
    Millis timeout_;
    std::uint32_t seq_ = 0;
    std::deque<std::uint32_t> pending_;
};

}  // namespace neurochain
