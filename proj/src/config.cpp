#include "entailkg/config.h"

#include <charconv>
#include <fstream>

#include "entailkg/errors.h"

namespace entailkg {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool to_uint(std::string_view s, std::uint64_t& out) {
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end && !s.empty();
}

bool to_double(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end && !s.empty();
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& name) {
    KeyValueConfig cfg;
    cfg.name_ = name;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view(line);
        if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = trim(view);
        if (view.empty()) continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) throw ParseError(name, line_no, "expected 'key = value'");
        const auto key = trim(view.substr(0, eq));
        const auto value = trim(view.substr(eq + 1));
        if (key.empty()) throw ParseError(name, line_no, "empty key");
        if (cfg.find(key)) throw ParseError(name, line_no, "duplicate key '" + std::string(key) + "'");
        cfg.entries_.push_back({std::string(key), std::string(value), line_no});
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return parse(in, path.string());
}

const ConfigEntry* KeyValueConfig::find(std::string_view key) const {
    for (const auto& e : entries_)
        if (e.key == key) return &e;
    return nullptr;
}

double parse_double(const ConfigEntry& e, const std::string& file) {
    double v = 0.0;
    if (!to_double(e.value, v)) throw ParseError(file, e.line, "'" + e.key + "' expects a number, got '" + e.value + "'");
    return v;
}

std::uint64_t parse_uint(const ConfigEntry& e, const std::string& file) {
    std::uint64_t v = 0;
    if (!to_uint(e.value, v)) {
        throw ParseError(file, e.line, "'" + e.key + "' expects a non-negative integer, got '" + e.value + "'");
    }
    return v;
}

bool parse_bool(const ConfigEntry& e, const std::string& file) {
    if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
    if (e.value == "false" || e.value == "0" || e.value == "no") return false;
    throw ParseError(file, e.line, "'" + e.key + "' expects true/false, got '" + e.value + "'");
}

std::vector<double> parse_double_list(const ConfigEntry& e, const std::string& file) {
    std::vector<double> out;
    for (auto item : split_commas(e.value)) {
        double v = 0.0;
        if (!to_double(item, v)) throw ParseError(file, e.line, "'" + e.key + "' has a non-numeric item '" + std::string(item) + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<std::uint64_t> parse_uint_list(const ConfigEntry& e, const std::string& file) {
    std::vector<std::uint64_t> out;
    for (auto item : split_commas(e.value)) {
        std::uint64_t v = 0;
        if (!to_uint(item, v)) throw ParseError(file, e.line, "'" + e.key + "' has a non-integer item '" + std::string(item) + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<std::uint64_t> parse_uint_list(std::string_view text) {
    std::vector<std::uint64_t> out;
    for (auto item : split_commas(text)) {
        std::uint64_t v = 0;
        if (!to_uint(item, v)) throw InputError("expected a comma-separated integer list, got '" + std::string(text) + "'");
        out.push_back(v);
    }
    return out;
}

}  // namespace entailkg
