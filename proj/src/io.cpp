#include "mufmt/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mufmt {

std::string format_double(double value)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);  // shortest round-trip form
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view token)
{
    double value = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (!token.empty() && *first == '+') ++first;
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last)
        throw FormatError("not a number: '" + std::string(token) + "'");
    return value;
}

long long parse_integer(std::string_view token)
{
    long long value = 0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), value);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size())
        throw FormatError("not an integer: '" + std::string(token) + "'");
    return value;
}

std::vector<std::string_view> split_whitespace(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw FormatError("write failed for " + path.string());
}

KeyValueConfig KeyValueConfig::parse(std::string_view text)
{
    KeyValueConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) {
            if (end == text.size()) break;
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw FormatError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key.empty())
            throw FormatError("config line " + std::to_string(line_no) + ": empty key");
        cfg.values_[std::string(key)] = std::string(value);
        if (end == text.size()) break;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path)
{
    return parse(read_text_file(path));
}

std::string KeyValueConfig::to_string() const
{
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

void KeyValueConfig::save(const std::filesystem::path& path) const
{
    write_text_file(path, to_string());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const
{
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const
{
    return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    auto v = get(key);
    if (!v) return fallback;
    try {
        return parse_double(*v);
    } catch (const FormatError&) {
        throw FormatError("config key '" + key + "': expected a number, got '" + *v + "'");
    }
}

long long KeyValueConfig::get_integer(const std::string& key, long long fallback) const
{
    auto v = get(key);
    if (!v) return fallback;
    try {
        return parse_integer(*v);
    } catch (const FormatError&) {
        throw FormatError("config key '" + key + "': expected an integer, got '" + *v + "'");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const
{
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw FormatError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<std::string> KeyValueConfig::unknown_keys(const std::vector<std::string>& allowed) const
{
    std::vector<std::string> unknown;
    for (const auto& [k, v] : values_)
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) unknown.push_back(k);
    return unknown;
}

void KeyValueConfig::require_known(const std::vector<std::string>& allowed) const
{
    auto unknown = unknown_keys(allowed);
    if (unknown.empty()) return;
    std::string msg = "unknown config key(s):";
    for (const auto& k : unknown) msg += " " + k;
    throw FormatError(msg);
}

void KeyValueConfig::merge(const KeyValueConfig& other)
{
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string format_field(const std::vector<double>& values)
{
    std::string out = "field v1 " + std::to_string(values.size()) + "\n";
    for (double v : values) {
        out += format_double(v);
        out += '\n';
    }
    return out;
}

std::vector<double> parse_field(std::string_view text)
{
    auto tokens = split_whitespace(text);
    if (tokens.size() < 3 || tokens[0] != "field" || tokens[1] != "v1")
        throw FormatError("field file: expected header 'field v1 N'");
    auto n = parse_integer(tokens[2]);
    if (n < 0 || static_cast<std::size_t>(n) != tokens.size() - 3)
        throw FormatError("field file: header announces " + std::string(tokens[2]) + " values, found " +
                          std::to_string(tokens.size() - 3));
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n));
    for (std::size_t i = 3; i < tokens.size(); ++i) values.push_back(parse_double(tokens[i]));
    return values;
}

void save_field(const std::vector<double>& values, const std::filesystem::path& path)
{
    write_text_file(path, format_field(values));
}

std::vector<double> load_field(const std::filesystem::path& path)
{
    return parse_field(read_text_file(path));
}

}  // namespace mufmt
