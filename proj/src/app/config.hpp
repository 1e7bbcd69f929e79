#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace rspde::app {

/// Flat key = value configuration with dotted keys ("grid.counts = 64").
/// '#' starts a comment; lists are comma separated.
class Config {
public:
    static Config parse(std::istream& in, const std::string& origin = "<config>");
    static Config load(const std::string& path);

    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string text(const std::string& key, const std::string& fallback) const;
    std::string text(const std::string& key) const;
    double number(const std::string& key, double fallback) const;
    double number(const std::string& key) const;
    long integer(const std::string& key, long fallback) const;
    bool flag(const std::string& key, bool fallback) const;
    std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const;
    std::vector<std::string> words(const std::string& key, const std::vector<std::string>& fallback) const;

    /// Throws ConfigurationError naming the first key outside `known`.
    void require_known(const std::set<std::string>& known) const;

    /// FNV-1a over the sorted "key=value" lines.
    std::uint64_t hash() const;
    std::string hash_hex() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
    std::string origin_;
};

std::string to_hex(std::uint64_t v);

}  // namespace rspde::app
