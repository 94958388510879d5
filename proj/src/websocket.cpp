#include "neurochain/websocket.hpp"

#include "neurochain/errors.hpp"
#include "text.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>

namespace neurochain::ws {

namespace {

constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
constexpr std::size_t kMaxHeader = 8192;

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

/// Reads up to and including the blank line ending an HTTP head. Bytes past
/// it stay in `rest`.
std::string read_head(Socket& sock, Millis timeout, std::string& rest) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::string buf;
    for (;;) {
        auto end = buf.find("\r\n\r\n");
        if (end != std::string::npos) {
            rest = buf.substr(end + 4);
            return buf.substr(0, end + 2);
        }
        if (buf.size() > kMaxHeader) throw TransportError("websocket: oversized handshake");
        auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now());
        char chunk[1024];
        auto n = sock.recv_some(chunk, std::max(left, Millis(0)));
        if (!n) throw TransportError("websocket: handshake timed out");
        if (*n == 0) throw TransportError("websocket: closed during handshake");
        buf.append(chunk, *n);
    }
}

/// Header lookup by lower-case name.
std::optional<std::string> header(std::string_view head, std::string_view name) {
    std::size_t pos = head.find("\r\n");
    while (pos != std::string_view::npos && pos + 2 < head.size()) {
        auto next = head.find("\r\n", pos + 2);
        auto line = head.substr(pos + 2, next - pos - 2);
        auto colon = line.find(':');
        if (colon != std::string_view::npos && lower(text::trim(line.substr(0, colon))) == name)
            return std::string(text::trim(line.substr(colon + 1)));
        pos = next;
    }
    return std::nullopt;
}

}  // namespace

std::string accept_key(std::string_view client_key) {
    std::string input = std::string(client_key) + std::string(kGuid);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_Digest(input.data(), input.size(), digest.data(), &len, EVP_sha1(), nullptr);
    std::array<unsigned char, 64> b64{};
    int n = EVP_EncodeBlock(b64.data(), digest.data(), static_cast<int>(len));
    return std::string(reinterpret_cast<const char*>(b64.data()), static_cast<std::size_t>(n));
}

std::string encode_frame(Opcode op, std::string_view payload, std::optional<std::uint32_t> mask) {
    std::string out;
    out += static_cast<char>(0x80 | static_cast<std::uint8_t>(op));
    const std::uint8_t mbit = mask ? 0x80 : 0x00;
    const auto n = payload.size();
    if (n < 126) {
        out += static_cast<char>(mbit | n);
    } else if (n <= 0xFFFF) {
        out += static_cast<char>(mbit | 126);
        out += static_cast<char>(n >> 8);
        out += static_cast<char>(n & 0xFF);
    } else {
        out += static_cast<char>(mbit | 127);
        for (int shift = 56; shift >= 0; shift -= 8) out += static_cast<char>((static_cast<std::uint64_t>(n) >> shift) & 0xFF);
    }
    if (!mask) return out + std::string(payload);
    const std::array<std::uint8_t, 4> key = {static_cast<std::uint8_t>(*mask >> 24), static_cast<std::uint8_t>(*mask >> 16),
                                             static_cast<std::uint8_t>(*mask >> 8), static_cast<std::uint8_t>(*mask)};
    for (auto k : key) out += static_cast<char>(k);
    for (std::size_t i = 0; i < n; ++i) out += static_cast<char>(static_cast<std::uint8_t>(payload[i]) ^ key[i % 4]);
    return out;
}

Channel Channel::accept(Socket sock, Millis timeout) {
    std::string rest;
    const std::string head = read_head(sock, timeout, rest);
    auto key = header(head, "sec-websocket-key");
    auto upgrade = header(head, "upgrade");
    if (head.rfind("GET ", 0) != 0 || !key || !upgrade || lower(*upgrade) != "websocket") {
        sock.send_all("HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n", timeout);
        throw TransportError("websocket: not an upgrade request");
    }
    sock.send_all("HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                  "Sec-WebSocket-Accept: " + accept_key(*key) + "\r\n\r\n",
                  timeout);
    return Channel(std::move(sock), Role::Server, std::move(rest));
}

Channel Channel::connect(Socket sock, const std::string& host, Millis timeout) {
    const std::string key = "bmV1cm9jaGFpbi1jbGllbnQ=";
    sock.send_all("GET / HTTP/1.1\r\nHost: " + host + "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                  "Sec-WebSocket-Key: " + key + "\r\nSec-WebSocket-Version: 13\r\n\r\n",
                  timeout);
    std::string rest;
    const std::string head = read_head(sock, timeout, rest);
    auto accept = header(head, "sec-websocket-accept");
    if (head.rfind("HTTP/1.1 101", 0) != 0 || !accept || *accept != accept_key(key))
        throw TransportError("websocket: upgrade refused");
    return Channel(std::move(sock), Role::Client, std::move(rest));
}

void Channel::send_frame(Opcode op, std::string_view payload, Millis timeout) {
    std::optional<std::uint32_t> mask;
    if (role_ == Role::Client) {
        mask_state_ ^= mask_state_ << 13;
        mask_state_ ^= mask_state_ >> 17;
        mask_state_ ^= mask_state_ << 5;
        mask = mask_state_;
    }
    sock_.send_all(encode_frame(op, payload, mask), timeout);
}

void Channel::send_text(std::string_view text_out, Millis timeout) { send_frame(Opcode::Text, text_out, timeout); }

void Channel::close(Millis timeout) {
    try {
        send_frame(Opcode::Close, {}, timeout);
    } catch (const TransportError&) {
    }
    sock_.shutdown();
}

bool Channel::fill(Millis timeout) {
    char chunk[1024];
    auto n = sock_.recv_some(chunk, timeout);
    if (!n) return false;
    if (*n == 0) throw TransportError("websocket: connection closed");
    buf_.append(chunk, *n);
    return true;
}

std::optional<std::string> Channel::read_text(Millis timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    auto left = [&] {
        return std::max(Millis(0), std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now()));
    };
    for (;;) {
        // Parse one complete frame out of buf_ if there is one.
        const auto* p = reinterpret_cast<const std::uint8_t*>(buf_.data());
        if (buf_.size() >= 2) {
            const bool masked = p[1] & 0x80;
            std::uint64_t len = p[1] & 0x7F;
            std::size_t off = 2;
            if (len == 126) off += 2;
            if (len == 127) off += 8;
            if (masked) off += 4;
            if (buf_.size() >= off) {
                if (len == 126) len = (std::uint64_t(p[2]) << 8) | p[3];
                if (len == 127) {
                    len = 0;
                    for (int i = 0; i < 8; ++i) len = (len << 8) | p[2 + i];
                }
                if (len > kMaxMessage) throw TransportError("websocket: frame too large");
                if ((role_ == Role::Server) != masked) throw TransportError("websocket: bad masking");
                const auto need = off + static_cast<std::size_t>(len);
                if (buf_.size() >= need) {
                    const bool fin = p[0] & 0x80;
                    const auto op = static_cast<Opcode>(p[0] & 0x0F);
                    std::string payload = buf_.substr(off, static_cast<std::size_t>(len));
                    if (masked) {
                        const std::uint8_t* key = p + off - 4;
                        for (std::size_t i = 0; i < payload.size(); ++i)
                            payload[i] = static_cast<char>(static_cast<std::uint8_t>(payload[i]) ^ key[i % 4]);
                    }
                    buf_.erase(0, need);
                    switch (op) {
                        case Opcode::Ping: send_frame(Opcode::Pong, payload, Millis(1000)); continue;
                        case Opcode::Pong: continue;
                        case Opcode::Close:
                            try {
                                send_frame(Opcode::Close, {}, Millis(200));
                            } catch (const TransportError&) {
                            }
                            throw TransportError("websocket: closed by peer");
                        case Opcode::Text:
                        case Opcode::Binary:
                            if (in_message_) throw TransportError("websocket: interleaved message");
                            message_ = std::move(payload);
                            in_message_ = !fin;
                            break;
                        case Opcode::Continuation:
                            if (!in_message_) throw TransportError("websocket: stray continuation");
                            message_ += payload;
                            in_message_ = !fin;
                            break;
                        default: throw TransportError("websocket: unknown opcode");
                    }
                    if (message_.size() > kMaxMessage) throw TransportError("websocket: message too large");
                    if (!in_message_) return std::exchange(message_, {});
                    continue;
                }
            }
        }
        if (!fill(left())) return std::nullopt;
    }
}

}  // namespace neurochain::ws
