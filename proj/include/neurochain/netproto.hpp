#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace neurochain {

// Newline-framed text protocol between the decoding chain (or the operator
// console) and the arm server.
//
//   msg = verb *( SP arg ) LF
//
//   TARGET <seq> <t_ms> <dist3>            client -> server
//   CMD <seq> <name> <Low|High> <Short|Long>
//   MODE <seq> <Hand|Arm>
//   GET <seq> STATE
//   SEQ <seq> RECORD <name> | STOP | REPLAY <name> | LIST | RENAME <old> <new>
//   STATE <seq_echo> <t_ms> <index3> <thumb3> <aperture3>   server -> client
//   ACK <seq_echo>
//   SEQS <seq_echo> <name>...
//   ERR <code> <text...>
//
// Decimal fields carry exactly three fractional digits in canonical form.

inline constexpr std::size_t kMaxLineBytes = 128;
inline constexpr std::uint16_t kDefaultTcpPort = 7420;
inline constexpr std::uint16_t kDefaultWebSocketPort = 7421;

namespace err {
inline constexpr int kParse = 400;
inline constexpr int kBadMode = 409;
inline constexpr int kOverloaded = 503;
}  // namespace err

enum class CommandName : std::uint8_t {
    OnOff,
    Forward,
    ForwardLeft,
    ForwardRight,
    Backward,
    BackwardLeft,
    BackwardRight,
    Up,
    Down,
    Left,
    Right,
    HandArmSwitch,
    LowSpeed,
    HighSpeed,
    ShortAction,
    LongAction,
};
inline constexpr std::size_t kCommandCount = 16;

/// Wire spellings in enum order.
extern const std::array<std::string_view, kCommandCount> kCommandNames;

enum class Speed : std::uint8_t { Low, High };
enum class ActionLength : std::uint8_t { Short, Long };
enum class Mode : std::uint8_t { Hand, Arm };

std::string_view to_string(CommandName c);
std::string_view to_string(Speed s);
std::string_view to_string(ActionLength d);
std::string_view to_string(Mode m);

/// Millimetres with 1 um resolution, the wire's decimal type. Valid range [0, 1000).
class Millimeters3 {
public:
    constexpr Millimeters3() = default;
    static constexpr Millimeters3 from_thousandths(std::int64_t t) { return Millimeters3(t); }
    /// Rounds to the nearest micrometre.
    static Millimeters3 from_mm(double mm);

    constexpr std::int64_t thousandths() const { return value_; }
    double mm() const { return static_cast<double>(value_) / 1000.0; }
    constexpr bool in_range() const { return value_ >= 0 && value_ < 1'000'000; }

    friend constexpr auto operator<=>(Millimeters3, Millimeters3) = default;

private:
    constexpr explicit Millimeters3(std::int64_t t) : value_(t) {}
    std::int64_t value_ = 0;
};

struct Target {
    std::uint32_t seq = 0;
    std::uint64_t t_ms = 0;
    Millimeters3 distance;
    friend bool operator==(const Target&, const Target&) = default;
};

struct Command {
    std::uint32_t seq = 0;
    CommandName name = CommandName::OnOff;
    Speed speed = Speed::High;
    ActionLength length = ActionLength::Short;
    friend bool operator==(const Command&, const Command&) = default;
};

struct ModeSwitch {
    std::uint32_t seq = 0;
    Mode mode = Mode::Hand;
    friend bool operator==(const ModeSwitch&, const ModeSwitch&) = default;
};

struct StateQuery {
    std::uint32_t seq = 0;
    friend bool operator==(const StateQuery&, const StateQuery&) = default;
};

/// Server-side motion sequence management.
struct SequenceControl {
    enum class Op : std::uint8_t { Record, Stop, Replay, List, Rename };
    std::uint32_t seq = 0;
    Op op = Op::List;
    std::string name;      // Record, Replay, Rename (old)
    std::string new_name;  // Rename
    friend bool operator==(const SequenceControl&, const SequenceControl&) = default;
};

struct State {
    std::uint32_t seq_echo = 0;
    std::uint64_t t_ms = 0;
    Millimeters3 index;
    Millimeters3 thumb;
    Millimeters3 aperture;
    friend bool operator==(const State&, const State&) = default;
};

struct Ack {
    std::uint32_t seq_echo = 0;
    friend bool operator==(const Ack&, const Ack&) = default;
};

struct SequenceList {
    std::uint32_t seq_echo = 0;
    std::vector<std::string> names;
    friend bool operator==(const SequenceList&, const SequenceList&) = default;
};

struct Err {
    int code = err::kParse;
    std::string text;  // single-space separated printable tokens
    friend bool operator==(const Err&, const Err&) = default;
};

using WireMessage =
    std::variant<Target, Command, ModeSwitch, StateQuery, SequenceControl, State, Ack, SequenceList, Err>;

/// Canonical LF-terminated line. Throws EncodeError for out-of-range fields or
/// lines longer than kMaxLineBytes.
std::string serialize(const WireMessage& msg);

/// Accepts runs of spaces between tokens and an optional trailing LF.
/// Throws ParseError carrying the offending line.
WireMessage parse(std::string_view line);

/// Sequence names: 1-12 characters of [A-Za-z0-9_-].
bool valid_sequence_name(std::string_view name);

/// Builds an Err with text cut down so the line fits kMaxLineBytes.
Err make_err(int code, std::string_view text);

/// Sequence number of a request, or the echoed one of a reply; 0 for Err.
std::uint32_t sequence_of(const WireMessage& msg);

}  // namespace neurochain
