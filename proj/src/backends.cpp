#include <cerrno>
#include <cstring>
#include <string_view>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>
#include <httplib.h>

#include "reflcausal/cesr.hpp"
#include "reflcausal/report.hpp"
#include "reflcausal/rng.hpp"

namespace reflcausal {

namespace {

constexpr std::string_view kWords[] = {
    "first",  "then",   "check",  "sum",    "value",  "step",    "result", "term",   "ratio",  "factor",
    "bound",  "case",   "count",  "angle",  "root",   "series",  "square", "prime",  "digit",  "length",
    "area",   "volume", "mean",   "order",  "index",  "product", "limit",  "base",   "power",  "proof",
    "answer", "clear",  "detail", "reason", "follow", "compute", "verify", "assume", "derive", "simplify"};

std::string pseudo_sentence(std::uint64_t h, std::size_t n_words) {
    Rng rng(h);
    std::string out;
    for (std::size_t i = 0; i < n_words; ++i) {
        if (i) out += ' ';
        out += kWords[uniform_index(rng, std::size(kWords))];
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------- mock

MockBackend::MockBackend(Mode mode, std::string text, std::vector<std::string> metrics)
    : mode_(mode), text_(std::move(text)), metrics_(std::move(metrics)) {}

std::vector<std::string> MockBackend::generate(const std::string &prompt, std::size_t n_samples, std::uint64_t seed) {
    ++calls_;
    samples_ += n_samples;
    std::vector<std::string> out;
    const std::uint64_t h = fnv1a64(prompt);
    for (std::size_t i = 0; i < n_samples; ++i) {
        switch (mode_) {
        case Mode::Fixed:
            out.push_back(text_);
            break;
        case Mode::Echo:
            out.push_back(prompt);
            break;
        case Mode::Varied: {
            Rng rng(derive_seed(seed, i));
            // 70% canonical answer for this prompt, otherwise a distractor.
            const bool canonical = uniform01(rng) < 0.7;
            const std::string core = pseudo_sentence(h, 12);
            out.push_back(canonical ? core
                                    : pseudo_sentence(h, 2) + " " + pseudo_sentence(derive_seed(h, rng()), 10));
            break;
        }
        }
    }
    return out;
}

std::map<std::string, double> MockBackend::measure(const std::string &prompt, const std::string &response) {
    std::map<std::string, double> out;
    for (const auto &m : metrics_) {
        const std::uint64_t h = derive_seed(fnv1a64(prompt + '\x1f' + response), fnv1a64(m));
        out[m] = static_cast<double>(h % 1000000) / 1000000.0;
    }
    return out;
}

std::string MockBackend::name() const {
    switch (mode_) {
    case Mode::Fixed:
        return "mock:fixed";
    case Mode::Echo:
        return "mock:echo";
    case Mode::Varied:
        return "mock";
    }
    return "mock";
}

// ---------------------------------------------------------------- http

HttpBackend::HttpBackend(std::string url, int timeout_seconds) : url_(std::move(url)), timeout_(timeout_seconds) {
    constexpr std::string_view scheme = "http://";
    if (url_.rfind(scheme, 0) != 0) throw ValidationError("backend URL must start with http://");
    std::string rest = url_.substr(scheme.size());
    const auto slash = rest.find('/');
    path_ = slash == std::string::npos ? "/generate" : rest.substr(slash);
    rest = rest.substr(0, slash);
    const auto colon = rest.rfind(':');
    host_ = rest.substr(0, colon);
    if (colon != std::string::npos) {
        try {
            port_ = std::stoi(rest.substr(colon + 1));
        } catch (const std::exception &) {
            throw ValidationError("bad port in backend URL " + url_);
        }
    }
    if (host_.empty()) throw ValidationError("backend URL has no host");
}

nlohmann::json HttpBackend::post(const nlohmann::json &body) const {
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    auto res = cli.Post(path_, body.dump(), "application/json");
    if (!res) throw Error("HTTP request to " + url_ + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(fmt::format("HTTP {} from {}", res->status, url_));
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception &e) {
        throw Error(std::string("backend reply is not JSON: ") + e.what());
    }
}

namespace {

std::vector<std::string> samples_from(const nlohmann::json &reply, std::size_t n) {
    if (!reply.contains("samples") || !reply["samples"].is_array()) throw Error("backend reply lacks 'samples'");
    std::vector<std::string> out;
    for (const auto &s : reply["samples"]) {
        if (!s.is_string()) throw Error("backend sample is not a string");
        out.push_back(s.get<std::string>());
    }
    if (out.size() != n) throw Error(fmt::format("backend returned {} samples, expected {}", out.size(), n));
    return out;
}

std::map<std::string, double> metrics_from(const nlohmann::json &reply) {
    std::map<std::string, double> out;
    if (!reply.contains("metrics")) return out;
    for (const auto &[k, v] : reply["metrics"].items()) {
        if (!v.is_number()) throw Error("backend metric '" + k + "' is not a number");
        out[k] = v.get<double>();
    }
    return out;
}

} // namespace

std::vector<std::string> HttpBackend::generate(const std::string &prompt, std::size_t n_samples, std::uint64_t seed) {
    return samples_from(post({{"prompt", prompt}, {"n_samples", n_samples}, {"seed", seed}}), n_samples);
}

std::map<std::string, double> HttpBackend::measure(const std::string &prompt, const std::string &response) {
    return metrics_from(post({{"prompt", prompt}, {"response", response}, {"measure", true}}));
}

// ---------------------------------------------------------------- subprocess

SubprocessBackend::SubprocessBackend(std::string command) : command_(std::move(command)) {
    if (command_.empty()) throw ValidationError("subprocess backend needs a command");
}

nlohmann::json SubprocessBackend::exchange(const nlohmann::json &request) const {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));
    if (pipe(from_child) != 0) {
        close(to_child[0]);
        close(to_child[1]);
        throw Error(std::string("pipe: ") + std::strerror(errno));
    }
    const pid_t pid = fork();
    if (pid < 0) throw Error(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char *>(nullptr));
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    const std::string line = request.dump() + "\n";
    std::size_t written = 0;
    while (written < line.size()) {
        const ssize_t w = write(to_child[1], line.data() + written, line.size() - written);
        if (w <= 0) break;
        written += static_cast<std::size_t>(w);
    }
    close(to_child[1]);
    std::string reply;
    char buf[4096];
    ssize_t r;
    while ((r = read(from_child[0], buf, sizeof buf)) > 0) reply.append(buf, static_cast<std::size_t>(r));
    close(from_child[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw Error(fmt::format("backend command exited with status {}", WIFEXITED(status) ? WEXITSTATUS(status) : -1));
    }
    const auto nl = reply.find('\n');
    try {
        return nlohmann::json::parse(nl == std::string::npos ? reply : reply.substr(0, nl));
    } catch (const nlohmann::json::exception &e) {
        throw Error(std::string("backend reply is not JSON: ") + e.what());
    }
}

std::vector<std::string> SubprocessBackend::generate(const std::string &prompt, std::size_t n_samples,
                                                     std::uint64_t seed) {
    return samples_from(exchange({{"prompt", prompt}, {"n_samples", n_samples}, {"seed", seed}}), n_samples);
}

std::map<std::string, double> SubprocessBackend::measure(const std::string &prompt, const std::string &response) {
    return metrics_from(exchange({{"prompt", prompt}, {"response", response}, {"measure", true}}));
}

// ---------------------------------------------------------------- factory

std::unique_ptr<GenerationBackend> make_backend(const std::string &spec) {
    if (spec == "mock") return std::make_unique<MockBackend>();
    if (spec == "mock:echo") return std::make_unique<MockBackend>(MockBackend::Mode::Echo);
    if (spec.rfind("mock:fixed", 0) == 0) {
        const auto eq = spec.find('=');
        return std::make_unique<MockBackend>(MockBackend::Mode::Fixed,
                                             eq == std::string::npos ? "ok" : spec.substr(eq + 1));
    }
    if (spec.rfind("http://", 0) == 0) return std::make_unique<HttpBackend>(spec);
    if (spec.rfind("cmd:", 0) == 0) return std::make_unique<SubprocessBackend>(spec.substr(4));
    throw ValidationError("unknown backend '" + spec + "' (use mock, mock:echo, mock:fixed=TEXT, http://..., cmd:...)");
}

} // namespace reflcausal
