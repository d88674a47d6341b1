#include "reflcausal/report.hpp"

#include <fstream>
#include <istream>
#include <sstream>
#include <system_error>

#include <fmt/format.h>

#include "reflcausal/errors.hpp"

namespace reflcausal {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

void write_file_atomic(const std::filesystem::path &path, const std::string &content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error("cannot rename onto " + path.string());
    }
}

// nlohmann::json keeps object keys in a std::map, so dump() is already sorted.
std::string dump_report(const nlohmann::json &j) { return j.dump(2) + "\n"; }

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// TOML-style "quoted" values lose their quotes.
std::string unquote(std::string s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

} // namespace

RunConfig RunConfig::parse(std::istream &in) {
    RunConfig cfg;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw MalformedRecord(n, "expected key = value");
        auto key = unquote(trim(t.substr(0, eq)));
        if (key.empty()) throw MalformedRecord(n, "empty key");
        if (cfg.has(key)) throw MalformedRecord(n, "duplicate key '" + key + "'");
        cfg.values_[key] = unquote(trim(t.substr(eq + 1)));
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    try {
        return parse(in);
    } catch (const MalformedRecord &e) {
        throw ValidationError(path.string() + ":" + std::to_string(e.line()) + ": " + e.reason());
    }
}

std::string RunConfig::get(const std::string &key, const std::string &fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::int64_t RunConfig::get_int(const std::string &key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t pos = 0;
    try {
        const auto v = std::stoll(it->second, &pos);
        if (pos == it->second.size()) return v;
    } catch (const std::exception &) {
    }
    throw ValidationError("config key '" + key + "' is not an integer: " + it->second);
}

std::uint64_t RunConfig::get_uint(const std::string &key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t pos = 0;
    try {
        if (!it->second.empty() && it->second[0] != '-') {
            const auto v = std::stoull(it->second, &pos);
            if (pos == it->second.size()) return v;
        }
    } catch (const std::exception &) {
    }
    throw ValidationError("config key '" + key + "' is not a non-negative integer: " + it->second);
}

double RunConfig::get_double(const std::string &key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t pos = 0;
    try {
        const auto v = std::stod(it->second, &pos);
        if (pos == it->second.size()) return v;
    } catch (const std::exception &) {
    }
    throw ValidationError("config key '" + key + "' is not a number: " + it->second);
}

std::vector<std::string> RunConfig::get_list(const std::string &key, const std::vector<std::string> &fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::string text = trim(it->second);
    if (text.size() >= 2 && text.front() == '[' && text.back() == ']') text = text.substr(1, text.size() - 2);
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = unquote(trim(item));
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string RunConfig::canonical() const {
    std::string out;
    for (const auto &[k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(canonical())); }

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto &[k, v] : values_) j[k] = v;
    return j;
}

} // namespace reflcausal
