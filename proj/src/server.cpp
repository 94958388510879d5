#include "neurochain/server.hpp"

#include "neurochain/errors.hpp"
#include "neurochain/websocket.hpp"

#include <spdlog/spdlog.h>

namespace neurochain {

namespace {
constexpr Millis kPollSlice{100};
constexpr Millis kSendTimeout{1000};
}  // namespace

ArmServer::ArmServer(ServerConfig cfg)
    : cfg_(std::move(cfg)),
      clock_(cfg_.virtual_clock ? std::unique_ptr<Clock>(new VirtualClock) : std::unique_ptr<Clock>(new SteadyClock)),
      sim_(cfg_.arm),
      tcp_(cfg_.tcp) {
    tcp_port_ = tcp_.port();
    if (cfg_.ws_port) {
        ws_.emplace(Endpoint{cfg_.tcp.host, *cfg_.ws_port});
        ws_port_ = ws_->port();
    }
    sim_thread_ = std::thread([this] { sim_loop(); });
    tcp_thread_ = std::thread([this] { accept_loop(tcp_, false); });
    if (ws_) ws_thread_ = std::thread([this] { accept_loop(*ws_, true); });
    spdlog::info("arm server on {} (websocket {}), {} clock", endpoint().str(), ws_ ? std::to_string(ws_port_) : "off",
                 cfg_.virtual_clock ? "virtual" : "real");
}

ArmServer::~ArmServer() { stop(); }

void ArmServer::stop() {
    if (!running_.exchange(false)) return;
    {
        std::lock_guard lk(mu_);
        stopping_ = true;
    }
    wake_.notify_all();
    caught_up_.notify_all();
    if (tcp_thread_.joinable()) tcp_thread_.join();
    if (ws_thread_.joinable()) ws_thread_.join();
    std::list<std::thread> conns;
    {
        std::lock_guard lk(conn_mu_);
        conns.swap(connections_);
    }
    for (auto& t : conns) t.join();
    if (sim_thread_.joinable()) sim_thread_.join();
}

void ArmServer::post(std::function<void()> job) {
    {
        std::lock_guard lk(mu_);
        if (stopping_) throw TransportError("server is stopping");
        mailbox_.push_back(std::move(job));
    }
    wake_.notify_all();
}

void ArmServer::sim_loop() {
    const auto tick = cfg_.arm.tick_ms;
    std::unique_lock lk(mu_);
    while (!stopping_) {
        if (!mailbox_.empty()) {
            auto job = std::move(mailbox_.front());
            mailbox_.pop_front();
            lk.unlock();
            job();
            lk.lock();
            continue;
        }
        if (sim_now_ + tick <= clock_->now_ms()) {
            lk.unlock();
            sim_.step(tick);
            lk.lock();
            sim_now_ = sim_.now_ms();
            continue;
        }
        caught_up_.notify_all();
        if (clock_->is_virtual()) {
            wake_.wait(lk);
        } else {
            const auto due = std::chrono::steady_clock::now() + Millis(sim_now_ + tick - clock_->now_ms());
            wake_.wait_until(lk, due);
        }
    }
    // Release anyone blocked in with_sim or handle_line.
    while (!mailbox_.empty()) {
        auto job = std::move(mailbox_.front());
        mailbox_.pop_front();
        lk.unlock();
        job();
        lk.lock();
    }
}

void ArmServer::advance(std::int64_t ms) {
    auto* vc = dynamic_cast<VirtualClock*>(clock_.get());
    if (!vc) throw ConfigError("advance() needs the virtual clock");
    vc->advance(ms);
    const auto target = vc->now_ms();
    std::unique_lock lk(mu_);
    wake_.notify_all();
    caught_up_.wait(lk, [&] { return stopping_ || (mailbox_.empty() && sim_now_ + cfg_.arm.tick_ms > target); });
}

std::string ArmServer::respond(const std::string& line) {
    WireMessage msg;
    try {
        msg = parse(line);
    } catch (const ParseError& e) {
        return serialize(make_err(err::kParse, e.what()));
    }
    try {
        WireMessage reply = std::visit(
            [this](const auto& m) -> WireMessage {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, Target>) {
                    sim_.submit_target(m.distance.mm());
                    return Ack{m.seq};
                } else if constexpr (std::is_same_v<T, Command> || std::is_same_v<T, ModeSwitch>) {
                    sim_.submit(m);
                    return Ack{m.seq};
                } else if constexpr (std::is_same_v<T, StateQuery>) {
                    const auto& s = sim_.feedback().state;
                    return State{m.seq, static_cast<std::uint64_t>(sim_.now_ms()), Millimeters3::from_mm(s.index_mm),
                                 Millimeters3::from_mm(s.thumb_mm), Millimeters3::from_mm(s.aperture_mm())};
                } else if constexpr (std::is_same_v<T, SequenceControl>) {
                    using Op = SequenceControl::Op;
                    switch (m.op) {
                        case Op::Record: sim_.start_recording(m.name); break;
                        case Op::Stop: sim_.stop_recording(); break;
                        case Op::Replay: sim_.replay(m.name); break;
                        case Op::Rename: sim_.rename(m.name, m.new_name); break;
                        case Op::List: return SequenceList{m.seq, sim_.sequences()};
                    }
                    return Ack{m.seq};
                } else {
                    return make_err(err::kParse, "unexpected reply verb from client");
                }
            },
            msg);
        return serialize(reply);
    } catch (const ProtocolError& e) {
        return serialize(make_err(e.code(), e.text()));
    } catch (const EncodeError& e) {
        return serialize(make_err(err::kParse, e.what()));
    }
}

std::string ArmServer::handle_line(const std::string& line) {
    {
        std::lock_guard lk(mu_);
        if (mailbox_.size() >= cfg_.max_backlog) return serialize(make_err(err::kOverloaded, "server overloaded"));
    }
    try {
        return with_sim([&](ArmSim&) { return respond(line); });
    } catch (const TransportError&) {
        return serialize(make_err(err::kOverloaded, "server is stopping"));
    }
}

void ArmServer::accept_loop(Listener& listener, bool websocket) {
    while (running_) {
        std::optional<Socket> sock;
        try {
            sock = listener.accept(kPollSlice);
        } catch (const TransportError& e) {
            spdlog::warn("accept failed: {}", e.what());
            continue;
        }
        if (!sock) continue;
        if (clients_ >= cfg_.max_clients) {
            try {
                sock->send_all(serialize(make_err(err::kOverloaded, "too many clients")), Millis(100));
            } catch (const TransportError&) {
            }
            continue;
        }
        ++clients_;
        std::lock_guard lk(conn_mu_);
        connections_.emplace_back([this, websocket, s = std::move(*sock)]() mutable {
            try {
                if (websocket) serve_ws(std::move(s));
                else serve_tcp(std::move(s));
            } catch (const TransportError& e) {
                spdlog::debug("connection closed: {}", e.what());
            }
            --clients_;
        });
    }
    listener.close();
}

void ArmServer::serve_tcp(Socket sock) {
    LineReader reader(kMaxLineBytes);
    while (running_) {
        auto line = reader.read_line(sock, kPollSlice);
        if (!line) continue;
        sock.send_all(handle_line(*line), kSendTimeout);
    }
}

void ArmServer::serve_ws(Socket sock) {
    auto ch = ws::Channel::accept(std::move(sock), kSendTimeout);
    while (running_) {
        auto msg = ch.read_text(kPollSlice);
        if (!msg) continue;
        ch.send_text(handle_line(*msg), kSendTimeout);
    }
    ch.close(Millis(100));
}

}  // namespace neurochain
