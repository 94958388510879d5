#include "neurochain/netproto.hpp"

#include "neurochain/errors.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace neurochain {

const std::array<std::string_view, kCommandCount> kCommandNames = {
    "OnOff", "Forward", "ForwardLeft", "ForwardRight", "Backward",      "BackwardLeft", "BackwardRight", "Up",
    "Down",  "Left",    "Right",       "HandArmSwitch", "LowSpeed",     "HighSpeed",    "ShortAction",   "LongAction",
};

std::string_view to_string(CommandName c) { return kCommandNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Speed s) { return s == Speed::Low ? "Low" : "High"; }
std::string_view to_string(ActionLength d) { return d == ActionLength::Short ? "Short" : "Long"; }
std::string_view to_string(Mode m) { return m == Mode::Hand ? "Hand" : "Arm"; }

Millimeters3 Millimeters3::from_mm(double mm) {
    if (!std::isfinite(mm) || std::abs(mm) > 1e12) throw EncodeError("distance is not a finite millimetre value");
    return Millimeters3(std::llround(mm * 1000.0));
}

bool valid_sequence_name(std::string_view name) {
    if (name.empty() || name.size() > 12) return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    });
}

namespace {

bool printable_token(std::string_view tok) {
    return !tok.empty() && std::all_of(tok.begin(), tok.end(), [](char c) { return c > ' ' && c < 0x7f; });
}

std::string fixed3(Millimeters3 v) {
    if (!v.in_range()) throw EncodeError("millimetre field outside [0, 1000)");
    const auto t = v.thousandths();
    std::string frac = std::to_string(t % 1000);
    return std::to_string(t / 1000) + "." + std::string(3 - frac.size(), '0') + frac;
}

struct Serializer {
    std::string operator()(const Target& m) const {
        return "TARGET " + std::to_string(m.seq) + " " + std::to_string(m.t_ms) + " " + fixed3(m.distance);
    }
    std::string operator()(const Command& m) const {
        return "CMD " + std::to_string(m.seq) + " " + std::string(to_string(m.name)) + " " +
               std::string(to_string(m.speed)) + " " + std::string(to_string(m.length));
    }
    std::string operator()(const ModeSwitch& m) const {
        return "MODE " + std::to_string(m.seq) + " " + std::string(to_string(m.mode));
    }
    std::string operator()(const StateQuery& m) const { return "GET " + std::to_string(m.seq) + " STATE"; }
    std::string operator()(const SequenceControl& m) const {
        using Op = SequenceControl::Op;
        auto need = [](const std::string& n) {
            if (!valid_sequence_name(n)) throw EncodeError("invalid sequence name `" + n + "`");
            return n;
        };
        std::string s = "SEQ " + std::to_string(m.seq);
        switch (m.op) {
            case Op::Record: return s + " RECORD " + need(m.name);
            case Op::Stop: return s + " STOP";
            case Op::Replay: return s + " REPLAY " + need(m.name);
            case Op::List: return s + " LIST";
            case Op::Rename: return s + " RENAME " + need(m.name) + " " + need(m.new_name);
        }
        throw EncodeError("unknown sequence operation");
    }
    std::string operator()(const State& m) const {
        return "STATE " + std::to_string(m.seq_echo) + " " + std::to_string(m.t_ms) + " " + fixed3(m.index) + " " +
               fixed3(m.thumb) + " " + fixed3(m.aperture);
    }
    std::string operator()(const Ack& m) const { return "ACK " + std::to_string(m.seq_echo); }
    std::string operator()(const SequenceList& m) const {
        std::string s = "SEQS " + std::to_string(m.seq_echo);
        for (const auto& n : m.names) {
            if (!valid_sequence_name(n)) throw EncodeError("invalid sequence name `" + n + "`");
            s += " " + n;
        }
        return s;
    }
    std::string operator()(const Err& m) const {
        if (m.code < 100 || m.code > 999) throw EncodeError("error code outside [100, 999]");
        std::string s = "ERR " + std::to_string(m.code);
        if (!m.text.empty()) {
            for (auto tok : text::split(m.text, ' '))
                if (!printable_token(tok)) throw EncodeError("error text must be single-spaced printable ASCII");
            s += " " + m.text;
        }
        return s;
    }
};

}  // namespace

std::string serialize(const WireMessage& msg) {
    std::string line = std::visit(Serializer{}, msg);
    line += '\n';
    if (line.size() > kMaxLineBytes) throw EncodeError("line exceeds " + std::to_string(kMaxLineBytes) + " bytes");
    return line;
}

Err make_err(int code, std::string_view text_in) {
    std::string t;
    for (auto tok : text::tokens(text_in)) {
        std::string clean;
        for (char c : tok) clean += (c > ' ' && c < 0x7f) ? c : '?';
        if (!t.empty()) t += ' ';
        t += clean;
    }
    const std::size_t budget = kMaxLineBytes - 9;  // "ERR nnn " + LF
    if (t.size() > budget) t.resize(budget);
    while (!t.empty() && t.back() == ' ') t.pop_back();
    return Err{code, t};
}

std::uint32_t sequence_of(const WireMessage& msg) {
    return std::visit(
        [](const auto& m) -> std::uint32_t {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Err>) return 0;
            else if constexpr (requires { m.seq_echo; }) return m.seq_echo;
            else return m.seq;
        },
        msg);
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void fail(std::string_view line, std::string_view why) {
    std::string shown(line.substr(0, 64));
    throw ParseError(std::string(why) + " in `" + shown + "`");
}

std::uint32_t u32(std::string_view line, std::string_view tok) {
    auto digits = std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; });
    auto v = digits ? text::parse_uint(tok) : std::nullopt;
    if (!v || *v > 0xFFFFFFFFull) fail(line, "bad 32-bit number");
    return static_cast<std::uint32_t>(*v);
}

std::uint64_t u64(std::string_view line, std::string_view tok) {
    auto digits = std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; });
    auto v = digits ? text::parse_uint(tok) : std::nullopt;
    if (!v) fail(line, "bad 64-bit number");
    return *v;
}

Millimeters3 mm3(std::string_view line, std::string_view tok) {
    auto dot = tok.find('.');
    auto whole = tok.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : tok.substr(dot + 1);
    auto is_digits = [](std::string_view s) {
        return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    };
    if (whole.empty() || whole.size() > 6 || !is_digits(whole)) fail(line, "bad decimal");
    if (dot != std::string_view::npos && (frac.empty() || frac.size() > 3 || !is_digits(frac)))
        fail(line, "bad decimal");
    std::int64_t t = static_cast<std::int64_t>(*text::parse_uint(whole)) * 1000;
    if (!frac.empty()) {
        std::int64_t f = static_cast<std::int64_t>(*text::parse_uint(frac));
        for (std::size_t i = frac.size(); i < 3; ++i) f *= 10;
        t += f;
    }
    auto v = Millimeters3::from_thousandths(t);
    if (!v.in_range()) fail(line, "millimetre value outside [0, 1000)");
    return v;
}

template <typename Enum, std::size_t N>
Enum lookup(std::string_view line, std::string_view tok, const std::array<std::string_view, N>& names) {
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == tok) return static_cast<Enum>(i);
    fail(line, "unknown keyword");
}

constexpr std::array<std::string_view, 2> kSpeeds = {"Low", "High"};
constexpr std::array<std::string_view, 2> kLengths = {"Short", "Long"};
constexpr std::array<std::string_view, 2> kModes = {"Hand", "Arm"};

std::string name_arg(std::string_view line, std::string_view tok) {
    if (!valid_sequence_name(tok)) fail(line, "bad sequence name");
    return std::string(tok);
}

}  // namespace

WireMessage parse(std::string_view line) {
    if (line.size() > kMaxLineBytes) fail(line, "line too long");
    std::string_view body = line;
    if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
    for (char c : body)
        if (c < ' ' || c >= 0x7f) fail(line, "non-printable byte");

    const auto tok = text::tokens(body);
    if (tok.empty()) fail(line, "empty message");
    const auto verb = tok[0];
    const auto n = tok.size();
    auto arity = [&](std::size_t want) {
        if (n != want) fail(line, "wrong number of fields");
    };

    if (verb == "TARGET") {
        arity(4);
        return Target{u32(line, tok[1]), u64(line, tok[2]), mm3(line, tok[3])};
    }
    if (verb == "CMD") {
        arity(5);
        return Command{u32(line, tok[1]), lookup<CommandName>(line, tok[2], kCommandNames),
                       lookup<Speed>(line, tok[3], kSpeeds), lookup<ActionLength>(line, tok[4], kLengths)};
    }
    if (verb == "MODE") {
        arity(3);
        return ModeSwitch{u32(line, tok[1]), lookup<Mode>(line, tok[2], kModes)};
    }
    if (verb == "GET") {
        arity(3);
        if (tok[2] != "STATE") fail(line, "GET supports only STATE");
        return StateQuery{u32(line, tok[1])};
    }
    if (verb == "SEQ") {
        if (n < 3) fail(line, "wrong number of fields");
        using Op = SequenceControl::Op;
        SequenceControl m{u32(line, tok[1]), Op::List, {}, {}};
        const auto op = tok[2];
        if (op == "RECORD") {
            arity(4);
            m.op = Op::Record;
            m.name = name_arg(line, tok[3]);
        } else if (op == "STOP") {
            arity(3);
            m.op = Op::Stop;
        } else if (op == "REPLAY") {
            arity(4);
            m.op = Op::Replay;
            m.name = name_arg(line, tok[3]);
        } else if (op == "LIST") {
            arity(3);
            m.op = Op::List;
        } else if (op == "RENAME") {
            arity(5);
            m.op = Op::Rename;
            m.name = name_arg(line, tok[3]);
            m.new_name = name_arg(line, tok[4]);
        } else {
            fail(line, "unknown sequence operation");
        }
        return m;
    }
    if (verb == "STATE") {
        arity(6);
        return State{u32(line, tok[1]), u64(line, tok[2]), mm3(line, tok[3]), mm3(line, tok[4]), mm3(line, tok[5])};
    }
    if (verb == "ACK") {
        arity(2);
        return Ack{u32(line, tok[1])};
    }
    if (verb == "SEQS") {
        if (n < 2) fail(line, "wrong number of fields");
        SequenceList m{u32(line, tok[1]), {}};
        for (std::size_t i = 2; i < n; ++i) m.names.push_back(name_arg(line, tok[i]));
        return m;
    }
    if (verb == "ERR") {
        if (n < 2) fail(line, "wrong number of fields");
        const auto code = u32(line, tok[1]);
        if (code < 100 || code > 999 || tok[1].size() != 3) fail(line, "bad error code");
        Err m{static_cast<int>(code), {}};
        for (std::size_t i = 2; i < n; ++i) {
            if (i > 2) m.text += ' ';
            m.text += tok[i];
        }
        return m;
    }
    fail(line, "unknown verb");
}

}  // namespace neurochain
