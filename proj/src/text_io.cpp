#include "volgan/text_io.hpp"

#include "volgan/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace volgan::io {

std::string format_double(double x) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf, static_cast<std::size_t>(n));
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view field, std::size_t line) {
    field = trim(field);
    double v = 0.0;
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (field.empty() || ec != std::errc() || ptr != end) {
        throw ParseError("not a number: '" + std::string(field) + "'", line);
    }
    return v;
}

long parse_long(std::string_view field, std::size_t line) {
    field = trim(field);
    long v = 0;
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (field.empty() || ec != std::errc() || ptr != end) {
        throw ParseError("not an integer: '" + std::string(field) + "'", line);
    }
    return v;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    return os;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open for reading: " + path);
    return is;
}

KeyValues KeyValues::parse(std::istream& is) {
    KeyValues kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
        const std::string key(trim(body.substr(0, eq)));
        if (key.empty()) throw ParseError("empty key", line_no);
        if (!kv.values_.emplace(key, std::string(trim(body.substr(eq + 1)))).second) {
            throw ParseError("duplicate key '" + key + "'", line_no);
        }
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path) {
    auto is = open_input(path);
    return parse(is);
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return parse_double(it->second, 0);
    } catch (const ParseError&) {
        throw ConfigError("config key '" + key + "': not a number: " + it->second);
    }
}

long KeyValues::get_long(const std::string& key, long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return parse_long(it->second, 0);
    } catch (const ParseError&) {
        throw ConfigError("config key '" + key + "': not an integer: " + it->second);
    }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': not a boolean: " + v);
}

void KeyValues::require_known(const std::vector<std::string>& known) const {
    for (const auto& [key, value] : values_) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
}

void KeyValues::write(std::ostream& os) const {
    for (const auto& [key, value] : values_) os << key << " = " << value << '\n';
}

} // namespace volgan::io
