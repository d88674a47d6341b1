#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace reflcausal {

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path &path, const std::string &content);

/// Two-space indented JSON with sorted keys and a trailing newline.
std::string dump_report(const nlohmann::json &j);

/// Flat `key = value` configuration. Blank lines and lines starting with
/// '#' are ignored; keys may not repeat. Double quotes around a key or value
/// are dropped, so flat TOML files parse.
class RunConfig {
  public:
    RunConfig() = default;

    static RunConfig parse(std::istream &in);
    static RunConfig load(const std::filesystem::path &path);

    bool has(const std::string &key) const { return values_.count(key) != 0; }
    void set(const std::string &key, std::string value) { values_[key] = std::move(value); }

    std::string get(const std::string &key, const std::string &fallback) const;
    std::int64_t get_int(const std::string &key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string &key, std::uint64_t fallback) const;
    double get_double(const std::string &key, double fallback) const;
    /// Comma-separated list, optionally in [..], items trimmed and unquoted.
    std::vector<std::string> get_list(const std::string &key, const std::vector<std::string> &fallback) const;

    /// Canonical `key = value` lines in key order.
    std::string canonical() const;
    /// FNV-1a of canonical().
    std::string hash() const;
    nlohmann::json to_json() const;
    const std::map<std::string, std::string> &values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

} // namespace reflcausal
