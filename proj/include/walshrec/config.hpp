#pragma once

// Sectioned key = value configuration files with line-anchored errors.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace walshrec {

/// Invalid or incomplete configuration. what() is "origin:line: message"
/// when the problem can be pinned to a line.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConfigEntry {
    std::string value;
    std::size_t line = 0;
    mutable bool used = false;
};

class Config {
public:
    static Config parse(std::istream& in, const std::string& origin = "<config>")
    {
        Config cfg;
        cfg.origin_ = origin;
        std::string raw;
        std::string section;
        std::size_t line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            std::string_view line = trim(strip_comment(raw));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw cfg.error(line_no, "unterminated section header");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                if (section.empty()) throw cfg.error(line_no, "empty section name");
                if (!cfg.sections_.emplace(section, line_no).second)
                    throw cfg.error(line_no, "duplicate section [" + section + "]");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw cfg.error(line_no, "expected 'key = value'");
            if (section.empty()) throw cfg.error(line_no, "key outside of any section");
            const std::string key = std::string(trim(line.substr(0, eq)));
            if (key.empty()) throw cfg.error(line_no, "missing key before '='");
            const std::string full = section + "." + key;
            if (cfg.entries_.count(full))
                throw cfg.error(line_no, "duplicate key '" + key + "' in [" + section + "]");
            cfg.entries_.emplace(full, ConfigEntry{std::string(trim(line.substr(eq + 1))), line_no});
        }
        return cfg;
    }

    static Config parse_string(const std::string& text, const std::string& origin = "<config>")
    {
        std::istringstream in(text);
        return parse(in, origin);
    }

    static Config load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) throw ConfigError(path + ": cannot open config file");
        return parse(in, path);
    }

    const std::string& origin() const noexcept { return origin_; }
    bool has_section(const std::string& section) const { return sections_.count(section) != 0; }
    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    /// Line of a key, or of its section header when the key is absent.
    std::size_t line_of(const std::string& key) const
    {
        if (auto it = entries_.find(key); it != entries_.end()) return it->second.line;
        if (auto it = sections_.find(key.substr(0, key.find('.'))); it != sections_.end()) return it->second;
        return 0;
    }

    ConfigError error(std::size_t line, const std::string& message) const
    {
        return ConfigError(line ? origin_ + ":" + std::to_string(line) + ": " + message : origin_ + ": " + message);
    }

    ConfigError error_at(const std::string& key, const std::string& message) const
    {
        return error(line_of(key), message);
    }

    /// Keys are "section.name".
    std::string require_string(const std::string& key) const
    {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw error_at(key, "missing required key '" + key + "'");
        it->second.used = true;
        if (it->second.value.empty()) throw error(it->second.line, "empty value for '" + key + "'");
        return it->second.value;
    }

    std::optional<std::string> get_string(const std::string& key) const
    {
        if (!has(key)) return std::nullopt;
        return require_string(key);
    }

    double require_double(const std::string& key) const { return to_double(key, require_string(key)); }

    double get_double(const std::string& key, double fallback) const
    {
        return has(key) ? require_double(key) : fallback;
    }

    std::uint64_t require_uint(const std::string& key) const { return to_uint(key, require_string(key)); }

    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const
    {
        return has(key) ? require_uint(key) : fallback;
    }

    bool get_bool(const std::string& key, bool fallback) const
    {
        if (!has(key)) return fallback;
        const auto v = require_string(key);
        if (v == "true" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "no" || v == "0") return false;
        throw error_at(key, "expected true/false for '" + key + "', got '" + v + "'");
    }

    std::vector<double> get_doubles(const std::string& key) const
    {
        std::vector<double> out;
        if (!has(key)) return out;
        for (const auto& item : split(require_string(key))) out.push_back(to_double(key, item));
        return out;
    }

    std::vector<std::uint64_t> get_uints(const std::string& key) const
    {
        std::vector<std::uint64_t> out;
        if (!has(key)) return out;
        for (const auto& item : split(require_string(key))) out.push_back(to_uint(key, item));
        return out;
    }

    /// Rejects keys that no accessor has read (typos, wrong unit suffix).
    void check_all_used() const
    {
        for (const auto& [key, entry] : entries_)
            if (!entry.used) throw error(entry.line, "unknown key '" + key + "'");
    }

private:
    static std::string_view strip_comment(std::string_view s)
    {
        const auto pos = s.find_first_of("#;");
        return pos == std::string_view::npos ? s : s.substr(0, pos);
    }

    static std::string_view trim(std::string_view s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    static std::vector<std::string> split(const std::string& s)
    {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            const auto comma = s.find(',', start);
            out.emplace_back(trim(std::string_view(s).substr(start, comma - start)));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        return out;
    }

    double to_double(const std::string& key, const std::string& text) const
    {
        double v = 0.0;
        const auto* end = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (ec != std::errc{} || ptr != end || text.empty())
            throw error_at(key, "expected a number for '" + key + "', got '" + text + "'");
        return v;
    }

    std::uint64_t to_uint(const std::string& key, const std::string& text) const
    {
        // accept integral values written in scientific notation (1e5)
        std::uint64_t v = 0;
        const auto* end = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(text.data(), end, v);
        if (ec == std::errc{} && ptr == end && !text.empty()) return v;
        const double d = to_double(key, text);
        if (!(d >= 0.0) || d != static_cast<double>(static_cast<std::uint64_t>(d)) || d > 9.0e18)
            throw error_at(key, "expected a non-negative integer for '" + key + "', got '" + text + "'");
        return static_cast<std::uint64_t>(d);
    }

    std::string origin_;
    std::map<std::string, ConfigEntry> entries_;
    std::map<std::string, std::size_t> sections_;
};

} // namespace walshrec
