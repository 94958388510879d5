#include "neurochain/socket.hpp"

#include "neurochain/errors.hpp"
#include "text.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace neurochain {

namespace {

using Clock = std::chrono::steady_clock;

[[noreturn]] void sys_fail(const std::string& what) {
    throw TransportError(what + ": " + std::strerror(errno));
}

int remaining_ms(Clock::time_point deadline) {
    auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now()).count();
    return left < 0 ? 0 : static_cast<int>(left);
}

/// poll() a single fd until `events` or the deadline; false on timeout.
bool wait_for(int fd, short events, Clock::time_point deadline) {
    for (;;) {
        pollfd p{fd, events, 0};
        int rc = ::poll(&p, 1, remaining_ms(deadline));
        if (rc > 0) return true;
        if (rc == 0) return false;
        if (errno != EINTR) sys_fail("poll");
    }
}

sockaddr_in resolve(const Endpoint& ep) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    const std::string host = ep.host.empty() || ep.host == "localhost" ? "127.0.0.1" : ep.host;
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
        throw TransportError("cannot resolve host `" + host + "`");
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}

void set_nonblocking(int fd, bool on) {
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, on ? (flags | O_NONBLOCK) : (flags & ~O_NONBLOCK));
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

Endpoint Endpoint::parse(std::string_view text_in) {
    auto colon = text_in.rfind(':');
    if (colon == std::string_view::npos) throw ConfigError("address must be host:port, got `" + std::string(text_in) + "`");
    Endpoint ep;
    auto host = text_in.substr(0, colon);
    if (!host.empty()) ep.host = std::string(host);
    auto port = text::parse_uint(text_in.substr(colon + 1));
    if (!port || *port > 65535) throw ConfigError("bad port in `" + std::string(text_in) + "`");
    ep.port = static_cast<std::uint16_t>(*port);
    return ep;
}

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

void Socket::close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

void Socket::shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::send_all(std::string_view data, Millis timeout) {
    const auto deadline = Clock::now() + timeout;
    while (!data.empty()) {
        if (!wait_for(fd_, POLLOUT, deadline)) throw TransportError("send timed out");
        ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL | MSG_DONTWAIT);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
            sys_fail("send");
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

std::optional<std::size_t> Socket::recv_some(std::span<char> buf, Millis timeout) {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
        if (!wait_for(fd_, POLLIN, deadline)) return std::nullopt;
        ssize_t n = ::recv(fd_, buf.data(), buf.size(), MSG_DONTWAIT);
        if (n >= 0) return static_cast<std::size_t>(n);
        if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
        if (errno == ECONNRESET || errno == ENOTCONN) return 0;
        sys_fail("recv");
    }
}

Socket connect_tcp(const Endpoint& to, Millis timeout) {
    const auto addr = resolve(to);
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) sys_fail("socket");
    set_nonblocking(s.fd(), true);
    int rc = ::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr);
    if (rc < 0 && errno != EINPROGRESS) sys_fail("connect to " + to.str());
    if (rc < 0) {
        if (!wait_for(s.fd(), POLLOUT, Clock::now() + timeout))
            throw TransportError("connect to " + to.str() + " timed out");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) throw TransportError("connect to " + to.str() + ": " + std::strerror(err));
    }
    set_nonblocking(s.fd(), false);
    set_nodelay(s.fd());
    return s;
}

Listener::Listener(const Endpoint& at) {
    auto addr = resolve(at);
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) sys_fail("socket");
    int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(sock_.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof addr) < 0) sys_fail("bind " + at.str());
    if (::listen(sock_.fd(), 16) < 0) sys_fail("listen");
    socklen_t len = sizeof addr;
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

std::optional<Socket> Listener::accept(Millis timeout) {
    if (!sock_.valid()) return std::nullopt;
    if (!wait_for(sock_.fd(), POLLIN, Clock::now() + timeout)) return std::nullopt;
    int fd = ::accept(sock_.fd(), nullptr, nullptr);
    if (fd < 0) {
        if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) return std::nullopt;
        sys_fail("accept");
    }
    set_nodelay(fd);
    return Socket(fd);
}

std::optional<std::string> LineReader::take() {
    for (;;) {
        auto lf = buf_.find('\n');
        if (lf == std::string::npos) {
            if (buf_.size() > max_) {
                // Keep the head so the parser sees an oversized line.
                if (!skipping_) {
                    skipping_ = true;
                    std::string head = buf_.substr(0, max_ + 1);
                    buf_.clear();
                    return head;
                }
                buf_.clear();
            }
            return std::nullopt;
        }
        std::string line = buf_.substr(0, lf + 1);
        buf_.erase(0, lf + 1);
        if (skipping_) {
            skipping_ = false;
            continue;
        }
        return line;
    }
}

std::optional<std::string> LineReader::read_line(Socket& sock, Millis timeout) {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
        if (auto line = take()) return line;
        char chunk[512];
        auto n = sock.recv_some(chunk, Millis(remaining_ms(deadline)));
        if (!n) return std::nullopt;
        if (*n == 0) throw TransportError("connection closed by peer");
        buf_.append(chunk, *n);
    }
}

}  // namespace neurochain
