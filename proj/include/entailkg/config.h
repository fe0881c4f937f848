#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace entailkg {

struct ConfigEntry {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

// Flat `key = value` text file. `#` starts a comment; blank lines are
// ignored; keys may not repeat.
class KeyValueConfig {
public:
    KeyValueConfig() = default;
    static KeyValueConfig parse(std::istream& in, const std::string& name);
    static KeyValueConfig load(const std::filesystem::path& path);

    const std::vector<ConfigEntry>& entries() const { return entries_; }
    const ConfigEntry* find(std::string_view key) const;
    bool contains(std::string_view key) const { return find(key) != nullptr; }

    const std::string& name() const { return name_; }

private:
    std::string name_;
    std::vector<ConfigEntry> entries_;
};

// Typed conversions raising ParseError with the entry's file and line.
double parse_double(const ConfigEntry& e, const std::string& file);
std::uint64_t parse_uint(const ConfigEntry& e, const std::string& file);
bool parse_bool(const ConfigEntry& e, const std::string& file);
std::vector<double> parse_double_list(const ConfigEntry& e, const std::string& file);
std::vector<std::uint64_t> parse_uint_list(const ConfigEntry& e, const std::string& file);

// Comma-separated unsigned integers, e.g. "1,5,10".
std::vector<std::uint64_t> parse_uint_list(std::string_view text);

}  // namespace entailkg
