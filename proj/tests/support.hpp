#pragma once

#include "neurochain/netproto.hpp"
#include "neurochain/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace neurochain::testing {

inline std::uint64_t pick(Xoshiro256& rng, std::uint64_t n) { return rng.next() % n; }

inline std::string random_name(Xoshiro256& rng) {
    static constexpr std::string_view alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-";
    std::string s(1 + pick(rng, 12), 'a');
    for (auto& c : s) c = alphabet[pick(rng, alphabet.size())];
    return s;
}

inline Millimeters3 random_mm(Xoshiro256& rng) {
    return Millimeters3::from_thousandths(static_cast<std::int64_t>(pick(rng, 1'000'000)));
}

inline std::uint32_t random_u32(Xoshiro256& rng) { return static_cast<std::uint32_t>(rng.next()); }

/// Any message the grammar can carry, with fields drawn over their full range.
inline WireMessage random_message(Xoshiro256& rng) {
    switch (pick(rng, 9)) {
    case 0:
        return Target{random_u32(rng), rng.next() >> pick(rng, 64), random_mm(rng)};
    case 1:
        return Command{random_u32(rng), static_cast<CommandName>(pick(rng, kCommandCount)),
                       static_cast<Speed>(pick(rng, 2)), static_cast<ActionLength>(pick(rng, 2))};
    case 2:
        return ModeSwitch{random_u32(rng), static_cast<Mode>(pick(rng, 2))};
    case 3:
        return StateQuery{random_u32(rng)};
    case 4: {
        SequenceControl s{random_u32(rng), static_cast<SequenceControl::Op>(pick(rng, 5)), {}, {}};
        if (s.op == SequenceControl::Op::Record || s.op == SequenceControl::Op::Replay ||
            s.op == SequenceControl::Op::Rename)
            s.name = random_name(rng);
        if (s.op == SequenceControl::Op::Rename) s.new_name = random_name(rng);
        return s;
    }
    case 5:
        return State{random_u32(rng), rng.next() >> pick(rng, 64), random_mm(rng), random_mm(rng), random_mm(rng)};
    case 6:
        return Ack{random_u32(rng)};
    case 7: {
        SequenceList l{random_u32(rng), {}};
        const auto n = pick(rng, 9);
        for (std::uint64_t i = 0; i < n; ++i) l.names.push_back(random_name(rng));
        return l;
    }
    default: {
        std::string text;
        const auto words = 1 + pick(rng, 8);
        for (std::uint64_t i = 0; i < words; ++i) {
            if (i) text += ' ';
            text += random_name(rng);
        }
        return Err{static_cast<int>(100 + pick(rng, 900)), text};
    }
    }
}

/// Random byte-level damage: flips, insertions, deletions, truncation.
inline std::string mutate(Xoshiro256& rng, std::string line) {
    const auto edits = 1 + pick(rng, 4);
    for (std::uint64_t e = 0; e < edits; ++e) {
        switch (pick(rng, 5)) {
        case 0:
            if (!line.empty()) line[pick(rng, line.size())] = static_cast<char>(pick(rng, 256));
            break;
        case 1:
            line.insert(line.begin() + static_cast<std::ptrdiff_t>(pick(rng, line.size() + 1)),
                        static_cast<char>(pick(rng, 256)));
            break;
        case 2:
            if (!line.empty()) line.erase(pick(rng, line.size()), 1);
            break;
        case 3:
            line.resize(pick(rng, line.size() + 1));
            break;
        default:
            line.append(pick(rng, 140), static_cast<char>(' ' + pick(rng, 95)));
            break;
        }
    }
    return line;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("neurochain-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

}  // namespace neurochain::testing
