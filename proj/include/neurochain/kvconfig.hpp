#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace neurochain {

/// Flat `key = value(s)` text document. `#` starts a comment line; values
/// are whitespace separated. Keys keep insertion order when written back.
class KeyValueDoc {
public:
    /// Parses a document; if `header` is given the first non-comment line must
    /// equal it. Throws ParseError.
    static KeyValueDoc parse(std::istream& in, std::optional<std::string_view> header = {});
    static KeyValueDoc load(const std::string& path, std::optional<std::string_view> header = {});

    void write(std::ostream& out, std::optional<std::string_view> header = {}) const;

    bool has(std::string_view key) const;
    void set(std::string key, std::string value);
    void set(std::string key, double value);
    void set(std::string key, const std::vector<double>& values);

    /// Throws ConfigError when missing or malformed.
    const std::string& str(std::string_view key) const;
    double number(std::string_view key) const;
    double number(std::string_view key, double fallback) const;
    std::int64_t integer(std::string_view key) const;
    std::int64_t integer(std::string_view key, std::int64_t fallback) const;
    std::vector<double> numbers(std::string_view key) const;
    std::vector<std::string> words(std::string_view key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace neurochain
