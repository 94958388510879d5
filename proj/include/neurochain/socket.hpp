#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace neurochain {

using Millis = std::chrono::milliseconds;

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    /// "host:port" or ":port". Throws ConfigError.
    static Endpoint parse(std::string_view text);
    std::string str() const { return host + ":" + std::to_string(port); }
};

/// Owning POSIX stream socket. All blocking calls take a timeout and throw
/// TransportError on failure.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }
    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void close();
    /// Wakes a thread blocked in recv on this socket.
    void shutdown();

    void send_all(std::string_view data, Millis timeout);
    /// Bytes read, 0 on orderly close, nullopt on timeout.
    std::optional<std::size_t> recv_some(std::span<char> buf, Millis timeout);

private:
    int fd_ = -1;
};

Socket connect_tcp(const Endpoint& to, Millis timeout);

class Listener {
public:
    /// Port 0 binds an ephemeral port. Throws TransportError.
    explicit Listener(const Endpoint& at);
    std::uint16_t port() const { return port_; }
    std::optional<Socket> accept(Millis timeout);
    void close() { sock_.close(); }

private:
    Socket sock_;
    std::uint16_t port_ = 0;
};

/// LF framing over a socket. Lines longer than `max_line` are cut at
/// max_line + 1 bytes so the parser rejects them; the rest is discarded.
class LineReader {
public:
    explicit LineReader(std::size_t max_line) : max_(max_line) {}
    /// Line including its LF; nullopt on timeout. Throws TransportError on
    /// disconnect.
    std::optional<std::string> read_line(Socket& sock, Millis timeout);

private:
    std::optional<std::string> take();
    std::size_t max_;
    std::string buf_;
    bool skipping_ = false;
};

}  // namespace neurochain
