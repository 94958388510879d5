#include "neurochain/armsim.hpp"

#include "neurochain/errors.hpp"
#include "neurochain/kvconfig.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace neurochain {

std::int64_t SteadyClock::now_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_).count();
}

// ---------------------------------------------------------------------------
// Config

void ArmConfig::validate() const {
    if (tick_ms <= 0) throw ConfigError("arm: tick must be > 0 ms");
    if (command_latency_ms < 0 || feedback_latency_ms < 0) throw ConfigError("arm: latencies must be >= 0");
    if (!(finger_min_mm < finger_max_mm)) throw ConfigError("arm: empty finger range");
    if (rest_mm < finger_min_mm || rest_mm > finger_max_mm) throw ConfigError("arm: rest position outside finger range");
    if (!(finger_speed_mm_s > 0.0)) throw ConfigError("arm: finger speed must be > 0");
    if (!(spring_per_s >= 0.0)) throw ConfigError("arm: spring constant must be >= 0");
    if (!(servo_gain_per_s > 0.0)) throw ConfigError("arm: servo gain must be > 0");
    if (!(arm_speed_m_s > 0.0) || !(workspace_radius_m > 0.0)) throw ConfigError("arm: bad arm limits");
    if (!(low_speed_fraction > 0.0) || low_speed_fraction > 1.0) throw ConfigError("arm: low speed fraction in (0, 1]");
    if (short_ms <= 0 || long_ms <= 0) throw ConfigError("arm: action durations must be > 0");
}

ArmConfig ArmConfig::from_doc(const KeyValueDoc& doc) {
    ArmConfig c;
    c.tick_ms = doc.integer("tick_ms", c.tick_ms);
    c.command_latency_ms = doc.integer("command_latency_ms", c.command_latency_ms);
    c.feedback_latency_ms = doc.integer("feedback_latency_ms", c.feedback_latency_ms);
    c.finger_min_mm = doc.number("finger_min_mm", c.finger_min_mm);
    c.finger_max_mm = doc.number("finger_max_mm", c.finger_max_mm);
    c.rest_mm = doc.number("rest_mm", c.rest_mm);
    c.finger_speed_mm_s = doc.number("finger_speed_mm_s", c.finger_speed_mm_s);
    c.spring_per_s = doc.number("spring_per_s", c.spring_per_s);
    c.servo_gain_per_s = doc.number("servo_gain_per_s", c.servo_gain_per_s);
    c.arm_speed_m_s = doc.number("arm_speed_m_s", c.arm_speed_m_s);
    c.workspace_radius_m = doc.number("workspace_radius_m", c.workspace_radius_m);
    c.low_speed_fraction = doc.number("low_speed_fraction", c.low_speed_fraction);
    c.short_ms = doc.integer("short_ms", c.short_ms);
    c.long_ms = doc.integer("long_ms", c.long_ms);
    c.start_powered = doc.integer("start_powered", c.start_powered ? 1 : 0) != 0;
    if (doc.has("start_mode")) {
        const auto& m = doc.str("start_mode");
        if (m == "Hand") c.start_mode = Mode::Hand;
        else if (m == "Arm") c.start_mode = Mode::Arm;
        else throw ConfigError("arm: start_mode must be Hand or Arm");
    }
    c.telemetry_capacity = static_cast<std::size_t>(doc.integer("telemetry_capacity", static_cast<std::int64_t>(c.telemetry_capacity)));
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Command semantics

namespace {

bool is_direction(CommandName c) { return c >= CommandName::Forward && c <= CommandName::Right; }

bool is_hand_motion(CommandName c) {
    return c == CommandName::Forward || c == CommandName::Backward || c == CommandName::Up || c == CommandName::Down;
}

Eigen::Vector3d direction(CommandName c) {
    const double d = 1.0 / std::sqrt(2.0);
    switch (c) {
        case CommandName::Forward: return {1, 0, 0};
        case CommandName::ForwardLeft: return {d, d, 0};
        case CommandName::ForwardRight: return {d, -d, 0};
        case CommandName::Backward: return {-1, 0, 0};
        case CommandName::BackwardLeft: return {-d, d, 0};
        case CommandName::BackwardRight: return {-d, -d, 0};
        case CommandName::Up: return {0, 0, 1};
        case CommandName::Down: return {0, 0, -1};
        case CommandName::Left: return {0, 1, 0};
        case CommandName::Right: return {0, -1, 0};
        default: return Eigen::Vector3d::Zero();
    }
}

}  // namespace

std::optional<std::string> check_command(const ArmState& state, const Command& cmd) {
    if (cmd.name == CommandName::OnOff) return std::nullopt;
    if (!state.powered) return std::string(to_string(cmd.name)) + " refused: arm is powered off";
    if (is_direction(cmd.name) && state.mode == Mode::Hand && !is_hand_motion(cmd.name))
        return std::string(to_string(cmd.name)) + " is not a hand motion";
    return std::nullopt;
}

std::optional<VelocityProgram> motion_program(const ArmConfig& cfg, const Command& cmd, std::int64_t now_ms) {
    // ArmState is not consulted here: the caller picks the axis by mode.
    if (!is_direction(cmd.name)) return std::nullopt;
    const double scale = cmd.speed == Speed::High ? 1.0 : cfg.low_speed_fraction;
    VelocityProgram p;
    p.until_ms = now_ms + (cmd.length == ActionLength::Short ? cfg.short_ms : cfg.long_ms);
    p.arm_m_s = direction(cmd.name) * (cfg.arm_speed_m_s * scale);
    const bool positive = cmd.name == CommandName::Forward || cmd.name == CommandName::Up;
    p.aperture_mm_s = (positive ? 1.0 : -1.0) * cfg.finger_speed_mm_s * scale;
    return p;
}

// ---------------------------------------------------------------------------
// ArmSim

ArmSim::ArmSim(ArmConfig cfg)
    : cfg_(cfg), commands_(cfg.command_latency_ms), sensors_(cfg.feedback_latency_ms) {
    cfg_.validate();
    state_.index_mm = state_.thumb_mm = cfg_.rest_mm;
    state_.mode = cfg_.start_mode;
    state_.powered = cfg_.start_powered;
    feedback_ = {0, state_};
    servo_target_ = requested_ = state_.aperture_mm();
}

ArmState ArmSim::shadow() const {
    ArmState s = state_;
    auto toggle = [&s](const Command& c) {
        if (check_command(s, c)) return;
        if (c.name == CommandName::OnOff) s.powered = !s.powered;
        if (c.name == CommandName::HandArmSwitch) s.mode = s.mode == Mode::Hand ? Mode::Arm : Mode::Hand;
    };
    for (const auto& [due, r] : commands_.items()) {
        if (const auto* c = std::get_if<Command>(&r)) toggle(*c);
        if (const auto* m = std::get_if<ModeSwitch>(&r); m && s.powered) s.mode = m->mode;
    }
    for (const auto& [due, c] : replay_queue_) toggle(c);
    return s;
}

void ArmSim::submit(const Command& cmd) {
    if (auto why = check_command(shadow(), cmd)) throw ProtocolError(err::kBadMode, *why);
    commands_.push(now_, cmd);
}

void ArmSim::submit(const ModeSwitch& m) {
    if (!shadow().powered) throw ProtocolError(err::kBadMode, "mode switch refused: arm is powered off");
    commands_.push(now_, m);
}

void ArmSim::submit_target(double aperture_mm) {
    const auto s = shadow();
    if (!s.powered) throw ProtocolError(err::kBadMode, "target refused: arm is powered off");
    if (s.mode != Mode::Hand) throw ProtocolError(err::kBadMode, "target refused: arm is in Arm mode");
    requested_ = aperture_mm;
    commands_.push(now_, TargetRequest{aperture_mm});
}

void ArmSim::submit_velocity(double aperture_mm_s) {
    const auto s = shadow();
    if (!s.powered) throw ProtocolError(err::kBadMode, "velocity refused: arm is powered off");
    if (s.mode != Mode::Hand) throw ProtocolError(err::kBadMode, "velocity refused: arm is in Arm mode");
    commands_.push(now_, VelocityRequest{aperture_mm_s});
}

void ArmSim::stop_motion() {
    arm_program_.reset();
    drive_ = FingerDrive::Idle;
}

void ArmSim::apply(const Command& cmd) {
    if (check_command(state_, cmd)) return;
    if (recording_) recorded_.entries.push_back({cmd, now_ - recording_->second});
    switch (cmd.name) {
        case CommandName::OnOff:
            state_.powered = !state_.powered;
            if (!state_.powered) stop_motion();
            return;
        case CommandName::HandArmSwitch:
            state_.mode = state_.mode == Mode::Hand ? Mode::Arm : Mode::Hand;
            stop_motion();
            return;
        case CommandName::LowSpeed: state_.speed = Speed::Low; return;
        case CommandName::HighSpeed: state_.speed = Speed::High; return;
        case CommandName::ShortAction: state_.length = ActionLength::Short; return;
        case CommandName::LongAction: state_.length = ActionLength::Long; return;
        default: break;
    }
    const auto prog = motion_program(cfg_, cmd, now_);
    if (state_.mode == Mode::Arm) {
        arm_program_ = prog;
    } else {
        drive_ = FingerDrive::Program;
        finger_velocity_ = prog->aperture_mm_s;
        finger_until_ = prog->until_ms;
    }
}

void ArmSim::deliver(const Request& r) {
    std::visit(
        [this](const auto& req) {
            using T = std::decay_t<decltype(req)>;
            if constexpr (std::is_same_v<T, Command>) {
                apply(req);
            } else if constexpr (std::is_same_v<T, ModeSwitch>) {
                if (state_.powered && state_.mode != req.mode) {
                    state_.mode = req.mode;
                    stop_motion();
                }
            } else {
                if (!state_.powered || state_.mode != Mode::Hand) return;
                if constexpr (std::is_same_v<T, TargetRequest>) {
                    drive_ = FingerDrive::Servo;
                    servo_target_ = req.aperture_mm;
                } else {
                    drive_ = FingerDrive::Velocity;
                    finger_velocity_ = req.aperture_mm_s;
                }
            }
        },
        r);
}

void ArmSim::step(std::int64_t dt_ms) {
    if (dt_ms <= 0) throw ConfigError("arm: step needs dt > 0");
    const std::int64_t t0 = now_;
    while (auto r = commands_.pop_due(t0)) deliver(*r);
    while (!replay_queue_.empty() && replay_queue_.front().first <= t0) {
        apply(replay_queue_.front().second);
        replay_queue_.pop_front();
    }

    if (arm_program_) {
        const auto active = std::clamp<std::int64_t>(arm_program_->until_ms - t0, 0, dt_ms);
        state_.position += arm_program_->arm_m_s * (static_cast<double>(active) / 1000.0);
        const double r = state_.position.norm();
        if (r > cfg_.workspace_radius_m) state_.position *= cfg_.workspace_radius_m / r;
        if (arm_program_->until_ms <= t0 + dt_ms) arm_program_.reset();
    }

    double aperture_v = 0.0;
    std::int64_t active = dt_ms;
    const double vmax = cfg_.finger_speed_mm_s;
    switch (drive_) {
        case FingerDrive::Idle: break;
        case FingerDrive::Program:
            active = std::clamp<std::int64_t>(finger_until_ - t0, 0, dt_ms);
            aperture_v = finger_velocity_;
            if (finger_until_ <= t0 + dt_ms) drive_ = FingerDrive::Idle;
            break;
        case FingerDrive::Velocity: aperture_v = std::clamp(finger_velocity_, -vmax, vmax); break;
        case FingerDrive::Servo: {
            const double gain = std::min(cfg_.servo_gain_per_s, 1000.0 / static_cast<double>(dt_ms));
            aperture_v = std::clamp(gain * (servo_target_ - state_.aperture_mm()), -vmax, vmax);
            break;
        }
    }
    const double dt = static_cast<double>(active) / 1000.0;
    for (double* y : {&state_.index_mm, &state_.thumb_mm}) {
        const double v = 0.5 * aperture_v - cfg_.spring_per_s * *y;
        *y = std::clamp(*y + v * dt, cfg_.finger_min_mm, cfg_.finger_max_mm);
    }

    now_ = t0 + dt_ms;
    telemetry_.push_back({now_, requested_, state_.aperture_mm()});
    if (telemetry_.size() > cfg_.telemetry_capacity) telemetry_.pop_front();
    sensors_.push(now_, {now_, state_});
    while (auto s = sensors_.pop_due(now_)) feedback_ = *s;
}

void ArmSim::advance(std::int64_t ms) {
    const std::int64_t end = now_ + ms;
    while (now_ < end) step(std::min(cfg_.tick_ms, end - now_));
}

// ---------------------------------------------------------------------------
// Sequences

void ArmSim::start_recording(const std::string& name) {
    if (!valid_sequence_name(name)) throw ProtocolError(err::kParse, "invalid sequence name");
    if (recording_) throw ProtocolError(err::kBadMode, "already recording " + recording_->first);
    if (!sequences_.count(name) && sequences_.size() >= kMaxSequences)
        throw ProtocolError(err::kBadMode, "sequence store is full");
    recording_ = {name, now_};
    recorded_ = {};
}

void ArmSim::stop_recording() {
    if (!recording_) return;
    sequences_[recording_->first] = std::move(recorded_);
    recorded_ = {};
    recording_.reset();
}

void ArmSim::replay(const std::string& name) {
    auto it = sequences_.find(name);
    if (it == sequences_.end()) throw ProtocolError(err::kBadMode, "no sequence named " + name);
    if (replaying()) throw ProtocolError(err::kBadMode, "a sequence is already replaying");
    if (!shadow().powered) throw ProtocolError(err::kBadMode, "replay refused: arm is powered off");
    for (const auto& e : it->second.entries) replay_queue_.emplace_back(now_ + e.offset_ms, e.command);
}

void ArmSim::rename(const std::string& from, const std::string& to) {
    auto it = sequences_.find(from);
    if (it == sequences_.end()) throw ProtocolError(err::kBadMode, "no sequence named " + from);
    if (!valid_sequence_name(to)) throw ProtocolError(err::kParse, "invalid sequence name");
    if (from == to) return;
    if (sequences_.count(to)) throw ProtocolError(err::kBadMode, "sequence " + to + " already exists");
    sequences_[to] = std::move(it->second);
    sequences_.erase(from);
}

std::vector<std::string> ArmSim::sequences() const {
    std::vector<std::string> names;
    for (const auto& [name, seq] : sequences_) names.push_back(name);
    return names;
}

const MotionSequence* ArmSim::sequence(const std::string& name) const {
    auto it = sequences_.find(name);
    return it == sequences_.end() ? nullptr : &it->second;
}

void ArmSim::store_sequence(const std::string& name, MotionSequence seq) {
    if (!valid_sequence_name(name)) throw ProtocolError(err::kParse, "invalid sequence name");
    for (std::size_t i = 1; i < seq.entries.size(); ++i)
        if (seq.entries[i].offset_ms < seq.entries[i - 1].offset_ms)
            throw ProtocolError(err::kParse, "sequence offsets must be non-decreasing");
    if (!sequences_.count(name) && sequences_.size() >= kMaxSequences)
        throw ProtocolError(err::kBadMode, "sequence store is full");
    sequences_[name] = std::move(seq);
}

void ArmSim::write_telemetry(std::ostream& out) const {
    out << "t_ms,requested_mm,actual_mm\n";
    char buf[96];
    for (const auto& s : telemetry_) {
        std::snprintf(buf, sizeof buf, "%lld,%.3f,%.3f\n", static_cast<long long>(s.t_ms), s.requested_mm, s.actual_mm);
        out << buf;
    }
}

}  // namespace neurochain
