#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace volgan::io {

/// Shortest-safe decimal form: 17 significant digits, round-trips exactly.
std::string format_double(double x);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

double parse_double(std::string_view field, std::size_t line);
long parse_long(std::string_view field, std::size_t line);

std::ofstream open_output(const std::string& path);
std::ifstream open_input(const std::string& path);

/// Flat `key = value` file. Blank lines and lines starting with '#' are
/// skipped; duplicate keys are a parse error.
class KeyValues {
public:
    KeyValues() = default;
    static KeyValues parse(std::istream& is);
    static KeyValues load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Throws ConfigError naming the first key not in `known`.
    void require_known(const std::vector<std::string>& known) const;

    const std::map<std::string, std::string>& entries() const { return values_; }
    void write(std::ostream& os) const;

private:
    std::map<std::string, std::string> values_;
};

} // namespace volgan::io
