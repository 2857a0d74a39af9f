#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mufmt {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shortest text that round-trips at 17 significant digits.
std::string format_double(double value);
double parse_double(std::string_view token);
long long parse_integer(std::string_view token);

std::vector<std::string_view> split_whitespace(std::string_view line);
std::string_view trim(std::string_view s);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// `key = value` lines, `#` comments, blank lines ignored. Keys are kept in
// sorted order so that writing a config is canonical.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text);
    static KeyValueConfig load(const std::filesystem::path& path);

    std::string to_string() const;
    void save(const std::filesystem::path& path) const;

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    void set(const std::string& key, double value) { values_[key] = format_double(value); }
    void set(const std::string& key, long long value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }
    void set(const std::string& key, const char* value) { values_[key] = value; }

    std::optional<std::string> get(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_integer(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Throws FormatError listing every key not in `allowed`.
    void require_known(const std::vector<std::string>& allowed) const;
    std::vector<std::string> unknown_keys(const std::vector<std::string>& allowed) const;

    const std::map<std::string, std::string>& entries() const { return values_; }
    void merge(const KeyValueConfig& other);

private:
    std::map<std::string, std::string> values_;
};

// Nodal value file: `field v1 N` followed by N decimal values, one per line.
std::string format_field(const std::vector<double>& values);
std::vector<double> parse_field(std::string_view text);
void save_field(const std::vector<double>& values, const std::filesystem::path& path);
std::vector<double> load_field(const std::filesystem::path& path);

}  // namespace mufmt
