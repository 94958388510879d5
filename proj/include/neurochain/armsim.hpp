#pragma once

#include "neurochain/netproto.hpp"

#include <Eigen/Core>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace neurochain {

class KeyValueDoc;

// ---------------------------------------------------------------------------
// Clocks. Time is integer milliseconds since start.

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() const = 0;
    virtual bool is_virtual() const = 0;
};

/// Manually advanced; starts at 0.
class VirtualClock final : public Clock {
public:
    std::int64_t now_ms() const override { return now_.load(); }
    bool is_virtual() const override { return true; }
    void advance(std::int64_t ms) { now_.fetch_add(ms); }

private:
    std::atomic<std::int64_t> now_{0};
};

/// Monotonic wall time since construction.
class SteadyClock final : public Clock {
public:
    std::int64_t now_ms() const override;
    bool is_virtual() const override { return false; }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------

/// FIFO that releases each item `latency_ms` after it was pushed.
template <typename T>
class LatencyQueue {
public:
    explicit LatencyQueue(std::int64_t latency_ms = 0) : latency_(latency_ms) {}

    std::int64_t latency_ms() const { return latency_; }
    void push(std::int64_t now_ms, T item) { items_.push_back({now_ms + latency_, std::move(item)}); }

    /// Pops the front item if it is due at `now_ms`.
    std::optional<T> pop_due(std::int64_t now_ms) {
        if (items_.empty() || items_.front().first > now_ms) return std::nullopt;
        T item = std::move(items_.front().second);
        items_.pop_front();
        return item;
    }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const std::deque<std::pair<std::int64_t, T>>& items() const { return items_; }
    void clear() { items_.clear(); }

private:
    std::int64_t latency_;
    std::deque<std::pair<std::int64_t, T>> items_;
};

struct ArmConfig {
    std::int64_t tick_ms = 2;
    std::int64_t command_latency_ms = 150;
    std::int64_t feedback_latency_ms = 150;

    double finger_min_mm = 0.0;
    double finger_max_mm = 20.0;
    double rest_mm = 0.0;
    /// Aperture speed limit, shared equally by the two fingers.
    double finger_speed_mm_s = 40.0;
    /// Restoring velocity -k * y on each finger.
    double spring_per_s = 0.0;
    /// Gain of the aperture servo that follows Target messages.
    double servo_gain_per_s = 250.0;

    double arm_speed_m_s = 0.30;
    double workspace_radius_m = 0.90;
    double low_speed_fraction = 0.25;
    std::int64_t short_ms = 200;
    std::int64_t long_ms = 1000;

    bool start_powered = true;
    Mode start_mode = Mode::Hand;
    std::size_t telemetry_capacity = 2'000'000;

    void validate() const;
    static ArmConfig from_doc(const KeyValueDoc& doc);
};

struct ArmState {
    double index_mm = 0.0;
    double thumb_mm = 0.0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // m
    Mode mode = Mode::Hand;
    Speed speed = Speed::High;
    ActionLength length = ActionLength::Short;
    bool powered = true;

    double aperture_mm() const { return index_mm + thumb_mm; }
    friend bool operator==(const ArmState&, const ArmState&) = default;
};

/// Sensor reading as it leaves the arm.
struct ArmSnapshot {
    std::int64_t t_ms = 0;
    ArmState state;
};

/// Constant-velocity segment produced by a motion command.
struct VelocityProgram {
    Eigen::Vector3d arm_m_s = Eigen::Vector3d::Zero();
    double aperture_mm_s = 0.0;
    std::int64_t until_ms = 0;
};

struct TelemetrySample {
    std::int64_t t_ms = 0;
    double requested_mm = 0.0;
    double actual_mm = 0.0;
};

struct MotionSequence {
    struct Entry {
        Command command;
        std::int64_t offset_ms = 0;
    };
    std::vector<Entry> entries;
};

/// Why a request is refused (409) before it reaches the arm, or nullopt.
std::optional<std::string> check_command(const ArmState& state, const Command& cmd);

/// Velocity program for a motion command started at `now_ms`, or nullopt for
/// latches and toggles. Assumes check_command passed.
std::optional<VelocityProgram> motion_program(const ArmConfig& cfg, const Command& cmd, std::int64_t now_ms);

/// The simulated arm. Requests pass through the command latency queue; the
/// feedback queue holds one snapshot per step. Not thread-safe: the server
/// owns it from a single loop.
class ArmSim {
public:
    explicit ArmSim(ArmConfig cfg);

    const ArmConfig& config() const { return cfg_; }
    std::int64_t now_ms() const { return now_; }
    const ArmState& state() const { return state_; }
    /// Most recent snapshot that made it through the feedback queue.
    const ArmSnapshot& feedback() const { return feedback_; }

    // Requests. Each is checked against the state it will meet once every
    // queued request has been delivered and throws ProtocolError(409) when
    // refused.
    void submit(const Command& cmd);
    void submit(const ModeSwitch& m);
    void submit_target(double aperture_mm);
    /// Direct aperture velocity, for in-process control loops.
    void submit_velocity(double aperture_mm_s);

    // Sequence management, applied immediately.
    void start_recording(const std::string& name);
    /// Stops the active recording, if any.
    void stop_recording();
    void replay(const std::string& name);
    void rename(const std::string& from, const std::string& to);
    std::vector<std::string> sequences() const;
    const MotionSequence* sequence(const std::string& name) const;
    void store_sequence(const std::string& name, MotionSequence seq);
    bool replaying() const { return !replay_queue_.empty(); }

    /// One explicit Euler step of `dt_ms`.
    void step(std::int64_t dt_ms);
    /// Steps by the configured tick until `ms` have elapsed.
    void advance(std::int64_t ms);

    const std::deque<TelemetrySample>& telemetry() const { return telemetry_; }
    void write_telemetry(std::ostream& out) const;

    static constexpr std::size_t kMaxSequences = 8;

private:
    struct TargetRequest {
        double aperture_mm;
    };
    struct VelocityRequest {
        double aperture_mm_s;
    };
    using Request = std::variant<Command, ModeSwitch, TargetRequest, VelocityRequest>;

    enum class FingerDrive { Idle, Program, Velocity, Servo };

    ArmState shadow() const;
    void deliver(const Request& r);
    void apply(const Command& cmd);
    void stop_motion();

    ArmConfig cfg_;
    std::int64_t now_ = 0;
    ArmState state_;
    ArmSnapshot feedback_;
    LatencyQueue<Request> commands_;
    LatencyQueue<ArmSnapshot> sensors_;

    std::optional<VelocityProgram> arm_program_;
    FingerDrive drive_ = FingerDrive::Idle;
    double finger_velocity_ = 0.0;  // aperture mm/s for Program and Velocity drives
    std::int64_t finger_until_ = 0;
    double servo_target_ = 0.0;
    double requested_ = 0.0;

    std::map<std::string, MotionSequence> sequences_;
    std::optional<std::pair<std::string, std::int64_t>> recording_;  // name, start time
    MotionSequence recorded_;
    std::deque<std::pair<std::int64_t, Command>> replay_queue_;

    std::deque<TelemetrySample> telemetry_;
};

}  // namespace neurochain
