#pragma once

#include "neurochain/socket.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace neurochain::ws {

/// Sec-WebSocket-Accept value for a client key (RFC 6455 section 1.3).
std::string accept_key(std::string_view client_key);

enum class Opcode : std::uint8_t { Continuation = 0, Text = 1, Binary = 2, Close = 8, Ping = 9, Pong = 10 };

/// One frame on the wire. Clients must pass a masking key, servers must not.
std::string encode_frame(Opcode op, std::string_view payload, std::optional<std::uint32_t> mask = {});

/// Message-level WebSocket endpoint over an established TCP socket. Control
/// frames are answered internally; fragmented messages are reassembled.
class Channel {
public:
    enum class Role { Server, Client };

    /// Reads the HTTP upgrade request and answers 101. Throws TransportError.
    static Channel accept(Socket sock, Millis timeout);
    /// Sends the upgrade request and checks the 101 reply.
    static Channel connect(Socket sock, const std::string& host, Millis timeout);

    void send_text(std::string_view text, Millis timeout);
    /// Next text message, or nullopt on timeout. Throws TransportError when
    /// the peer closes or violates the framing.
    std::optional<std::string> read_text(Millis timeout);
    void close(Millis timeout);
    Socket& socket() { return sock_; }

    static constexpr std::size_t kMaxMessage = 4096;

private:
    Channel(Socket sock, Role role, std::string pending) : sock_(std::move(sock)), role_(role), buf_(std::move(pending)) {}
    bool fill(Millis timeout);
    void send_frame(Opcode op, std::string_view payload, Millis timeout);

    Socket sock_;
    Role role_;
    std::string buf_;
    std::string message_;
    bool in_message_ = false;
    std::uint32_t mask_state_ = 0x9E3779B9u;
};

}  // namespace neurochain::ws
