#include "config.hpp"

#include "rspde/error.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rspde::app {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_number(const std::string& key, const std::string& v) {
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE)
        throw ConfigurationError("key '" + key + "': '" + v + "' is not a number");
    return x;
}

}  // namespace

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

Config Config::parse(std::istream& in, const std::string& origin) {
    Config c;
    c.origin_ = origin;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(number);
        if (eq == std::string::npos) throw ConfigurationError(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || !std::all_of(key.begin(), key.end(), [](char ch) {
                return std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_';
            }))
            throw ConfigurationError(where + ": malformed key '" + key + "'");
        if (c.has(key)) throw ConfigurationError(where + ": duplicate key '" + key + "'");
        c.entries_[key] = value;
    }
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot read config file " + path);
    return parse(in, path);
}

std::string Config::text(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

std::string Config::text(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigurationError("missing required key '" + key + "'");
    return it->second;
}

double Config::number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
}

double Config::number(const std::string& key) const { return parse_number(key, text(key)); }

long Config::integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const double x = number(key);
    if (x != static_cast<double>(static_cast<long>(x)))
        throw ConfigurationError("key '" + key + "' must be an integer");
    return static_cast<long>(x);
}

bool Config::flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = text(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigurationError("key '" + key + "' must be true or false");
}

std::vector<double> Config::numbers(const std::string& key, const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    for (const auto& item : split(text(key))) out.push_back(parse_number(key, item));
    return out;
}

std::vector<std::string> Config::words(const std::string& key, const std::vector<std::string>& fallback) const {
    return has(key) ? split(text(key)) : fallback;
}

void Config::require_known(const std::set<std::string>& known) const {
    for (const auto& [key, value] : entries_)
        if (!known.count(key)) throw ConfigurationError(origin_ + ": unknown key '" + key + "'");
}

std::uint64_t Config::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto feed = [&h](const std::string& s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [key, value] : entries_) feed(key + "=" + value + "\n");
    return h;
}

std::string Config::hash_hex() const { return to_hex(hash()); }

}  // namespace rspde::app
