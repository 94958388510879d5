#pragma once

#include "neurochain/armsim.hpp"
#include "neurochain/socket.hpp"

#include <atomic>
#include <condition_variable>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

namespace neurochain {

struct ServerConfig {
    Endpoint tcp{"127.0.0.1", kDefaultTcpPort};
    /// WebSocket listener on the same host; nullopt disables it.
    std::optional<std::uint16_t> ws_port = kDefaultWebSocketPort;
    ArmConfig arm;
    bool virtual_clock = false;
    std::size_t max_clients = 16;
    /// Requests waiting for the simulation loop before new ones get ERR 503.
    std::size_t max_backlog = 1024;
};

/// Arm server: one thread per connection, one simulation loop that owns the
/// ArmSim and serves requests in arrival order.
class ArmServer {
public:
    /// Binds both listeners and starts serving. Throws TransportError.
    explicit ArmServer(ServerConfig cfg);
    ~ArmServer();
    ArmServer(const ArmServer&) = delete;
    ArmServer& operator=(const ArmServer&) = delete;

    std::uint16_t tcp_port() const { return tcp_port_; }
    std::uint16_t ws_port() const { return ws_port_; }
    Endpoint endpoint() const { return {cfg_.tcp.host, tcp_port_}; }

    /// Virtual clock only: moves time forward and returns once the simulation
    /// has caught up.
    void advance(std::int64_t ms);

    /// Runs `fn` on the simulation loop and returns its result.
    template <typename F>
    auto with_sim(F&& fn) -> decltype(fn(std::declval<ArmSim&>()));

    /// Reply line for one request line, computed on the simulation loop.
    std::string handle_line(const std::string& line);

    void stop();

private:
    void sim_loop();
    void post(std::function<void()> job);
    void accept_loop(Listener& listener, bool websocket);
    void serve_tcp(Socket sock);
    void serve_ws(Socket sock);
    std::string respond(const std::string& line);

    ServerConfig cfg_;
    std::unique_ptr<Clock> clock_;
    ArmSim sim_;

    std::mutex mu_;
    std::condition_variable wake_;
    std::condition_variable caught_up_;
    std::deque<std::function<void()>> mailbox_;
    bool stopping_ = false;

    Listener tcp_;
    std::optional<Listener> ws_;
    std::uint16_t tcp_port_ = 0;
    std::uint16_t ws_port_ = 0;

    std::int64_t sim_now_ = 0;  // mirror of sim_.now_ms() under mu_
    std::atomic<bool> running_{true};

    std::mutex conn_mu_;
    std::list<std::thread> connections_;
    std::atomic<std::size_t> clients_{0};

    std::thread sim_thread_;
    std::thread tcp_thread_;
    std::thread ws_thread_;
};

template <typename F>
auto ArmServer::with_sim(F&& fn) -> decltype(fn(std::declval<ArmSim&>())) {
    using R = decltype(fn(sim_));
    std::mutex done_mu;
    std::condition_variable done_cv;
    bool done = false;
    std::exception_ptr error;
    std::optional<std::conditional_t<std::is_void_v<R>, int, R>> result;
    post([&] {
        try {
            if constexpr (std::is_void_v<R>) fn(sim_);
            else result.emplace(fn(sim_));
        } catch (...) {
            error = std::current_exception();
        }
        std::lock_guard lk(done_mu);
        done = true;
        done_cv.notify_one();
    });
    std::unique_lock lk(done_mu);
    done_cv.wait(lk, [&] { return done; });
    if (error) std::rethrow_exception(error);
    if constexpr (!std::is_void_v<R>) return std::move(*result);
}

}  // namespace neurochain
