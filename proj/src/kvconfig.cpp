#include "neurochain/kvconfig.hpp"

#include "neurochain/errors.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace neurochain {

std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

KeyValueDoc KeyValueDoc::parse(std::istream& in, std::optional<std::string_view> header) {
    KeyValueDoc doc;
    std::string line;
    std::size_t lineno = 0;
    bool need_header = header.has_value();
    while (std::getline(in, line)) {
        ++lineno;
        auto row = text::trim(line);
        if (row.empty() || row.front() == '#') continue;
        if (need_header) {
            if (row != *header) throw ParseError("expected header `" + std::string(*header) + "`", lineno);
            need_header = false;
            continue;
        }
        auto eq = row.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected `key = value`", lineno);
        auto key = text::trim(row.substr(0, eq));
        if (key.empty()) throw ParseError("empty key", lineno);
        doc.set(std::string(key), std::string(text::trim(row.substr(eq + 1))));
    }
    if (need_header) throw ParseError("missing header `" + std::string(*header) + "`", lineno + 1);
    return doc;
}

KeyValueDoc KeyValueDoc::load(const std::string& path, std::optional<std::string_view> header) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    return parse(in, header);
}

void KeyValueDoc::write(std::ostream& out, std::optional<std::string_view> header) const {
    if (header) out << *header << '\n';
    for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

bool KeyValueDoc::has(std::string_view key) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

void KeyValueDoc::set(std::string key, std::string value) {
    for (auto& e : entries_) {
        if (e.first == key) {
            e.second = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(key), std::move(value));
}

void KeyValueDoc::set(std::string key, double value) { set(std::move(key), format_double(value)); }

void KeyValueDoc::set(std::string key, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ' ';
        s += format_double(values[i]);
    }
    set(std::move(key), std::move(s));
}

const std::string& KeyValueDoc::str(std::string_view key) const {
    for (const auto& e : entries_)
        if (e.first == key) return e.second;
    throw ConfigError("missing key `" + std::string(key) + "`");
}

double KeyValueDoc::number(std::string_view key) const {
    auto v = text::parse_double(text::trim(str(key)));
    if (!v || !std::isfinite(*v)) throw ConfigError("key `" + std::string(key) + "` is not a finite number");
    return *v;
}

double KeyValueDoc::number(std::string_view key, double fallback) const {
    return has(key) ? number(key) : fallback;
}

std::int64_t KeyValueDoc::integer(std::string_view key) const {
    auto v = text::parse_int(text::trim(str(key)));
    if (!v) throw ConfigError("key `" + std::string(key) + "` is not an integer");
    return *v;
}

std::int64_t KeyValueDoc::integer(std::string_view key, std::int64_t fallback) const {
    return has(key) ? integer(key) : fallback;
}

std::vector<double> KeyValueDoc::numbers(std::string_view key) const {
    std::vector<double> out;
    for (auto tok : text::tokens(str(key))) {
        auto v = text::parse_double(tok);
        if (!v || !std::isfinite(*v)) throw ConfigError("key `" + std::string(key) + "` has a non-numeric value");
        out.push_back(*v);
    }
    return out;
}

std::vector<std::string> KeyValueDoc::words(std::string_view key) const {
    std::vector<std::string> out;
    for (auto tok : text::tokens(str(key))) out.emplace_back(tok);
    return out;
}

}  // namespace neurochain
