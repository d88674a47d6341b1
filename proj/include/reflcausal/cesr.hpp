#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reflcausal/dataset.hpp"
#include "reflcausal/errors.hpp"
#include "reflcausal/intervention.hpp"

namespace reflcausal {

/// Text generator. Implementations must tolerate concurrent callers.
class GenerationBackend {
  public:
    virtual ~GenerationBackend() = default;
    /// Exactly n_samples strings.
    virtual std::vector<std::string> generate(const std::string &prompt, std::size_t n_samples,
                                              std::uint64_t seed) = 0;
    /// Uncertainty metrics of a response, e.g. {"MI": .., "PPL": ..}. Empty
    /// when the backend cannot measure them.
    virtual std::map<std::string, double> measure(const std::string &prompt, const std::string &response);
    virtual std::string name() const = 0;
};

/// Deterministic in-process backend.
///   Fixed:  every sample is `text`.
///   Echo:   every sample is the prompt itself.
///   Varied: a prompt-determined canonical answer most of the time, and a
///           seed-dependent distractor otherwise (for clustering tests).
class MockBackend final : public GenerationBackend {
  public:
    enum class Mode : std::uint8_t { Fixed, Echo, Varied };

    explicit MockBackend(Mode mode = Mode::Varied, std::string text = "ok",
                         std::vector<std::string> metrics = {"MI", "PPL"});

    std::vector<std::string> generate(const std::string &prompt, std::size_t n_samples, std::uint64_t seed) override;
    std::map<std::string, double> measure(const std::string &prompt, const std::string &response) override;
    std::string name() const override;

    std::size_t calls() const { return calls_.load(); }
    std::size_t samples() const { return samples_.load(); }

  private:
    Mode mode_;
    std::string text_;
    std::vector<std::string> metrics_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> samples_{0};
};

/// POSTs {"prompt", "n_samples", "seed"} as JSON to `url` (http://host:port/path)
/// and expects {"samples": [..], "metrics": {..}?}.
class HttpBackend final : public GenerationBackend {
  public:
    explicit HttpBackend(std::string url, int timeout_seconds = 120);
    std::vector<std::string> generate(const std::string &prompt, std::size_t n_samples, std::uint64_t seed) override;
    std::map<std::string, double> measure(const std::string &prompt, const std::string &response) override;
    std::string name() const override { return "http:" + url_; }

  private:
    nlohmann::json post(const nlohmann::json &body) const;
    std::string url_;
    std::string host_;
    int port_ = 80;
    std::string path_;
    int timeout_;
};

/// Runs `command` through /bin/sh once per request, writes one JSON request
/// line to its stdin and reads one JSON response line from its stdout.
class SubprocessBackend final : public GenerationBackend {
  public:
    explicit SubprocessBackend(std::string command);
    std::vector<std::string> generate(const std::string &prompt, std::size_t n_samples, std::uint64_t seed) override;
    std::map<std::string, double> measure(const std::string &prompt, const std::string &response) override;
    std::string name() const override { return "subprocess:" + command_; }

  private:
    nlohmann::json exchange(const nlohmann::json &request) const;
    std::string command_;
};

/// "mock", "mock:fixed", "mock:echo", "http://...", or "cmd:<shell command>".
std::unique_ptr<GenerationBackend> make_backend(const std::string &spec);

// ---------------------------------------------------------------- clustering

using SimilarityFn = std::function<double(const std::string &, const std::string &)>;

/// Jaccard index of the sets of lowercased whitespace-separated tokens; 1 for
/// two empty strings.
double token_jaccard(const std::string &a, const std::string &b);

struct ClusterStats {
    std::size_t n_clusters = 0;
    std::size_t largest_size = 0;
};

struct Representative {
    std::string text;
    std::size_t index = 0; // into the sample list
    ClusterStats stats;
};

/// Single-linkage clusters at similarity >= threshold; picks the largest
/// cluster (ties: higher mean within-cluster similarity, then lowest member
/// index) and returns its medoid (ties: lowest index). Throws DomainError on
/// an empty sample list.
Representative select_representative(const std::vector<std::string> &samples, double threshold = 0.5,
                                     const SimilarityFn &similarity = token_jaccard);

// ---------------------------------------------------------------- prompts

struct PromptSet {
    std::string initial;   // {x}
    std::string feedback;  // {x}, {history} = latest response, {constraints}
    std::string refine;    // {x}, {history} = y_0, fb_0, ..., y_t, fb_t, {constraints}
    std::string emphasize; // {pattern}, {definition}
    std::string suppress;  // {pattern}, {definition}
    std::string matcher;   // {pattern}, {definition}, {x}, {round}, {feedback}, {response}

    static PromptSet defaults();
    /// Reads initial.txt, feedback.txt, refine.txt, emphasize.txt,
    /// suppress.txt and matcher.txt; missing files keep the default.
    static PromptSet load(const std::filesystem::path &dir);
};

/// Replaces each {name} whose name is a key of `values`; other braces are
/// left untouched.
std::string render_template(const std::string &tmpl, const std::map<std::string, std::string> &values);

// ---------------------------------------------------------------- self-refine

struct SelfRefineConfig {
    int t_max = 5;
    std::size_t resample_count = 20;
    double similarity_threshold = 0.5;
    PromptSet prompts = PromptSet::defaults();
    std::map<std::string, std::string> definitions; // pattern -> description for constraint clauses

    void validate() const;
};

struct RefineStep {
    std::string feedback_prompt;
    std::string feedback; // fb_{t-1}
    ClusterStats feedback_stats;
    std::string refine_prompt;
    std::string response; // y_t
    ClusterStats response_stats;
    std::map<std::string, double> uncertainty; // of y_t
};

struct RawTrajectory {
    std::string trajectory_id;
    std::string model_id;
    std::string task_id;
    std::string query;
    std::optional<std::string> ground_truth;
    std::string initial_prompt;
    std::string initial; // y_0
    ClusterStats initial_stats;
    std::map<std::string, double> initial_uncertainty;
    std::vector<RefineStep> steps; // step r holds round r

    const std::string &final_response() const { return steps.empty() ? initial : steps.back().response; }
};

nlohmann::json to_json(const RawTrajectory &t);
RawTrajectory raw_trajectory_from_json(const nlohmann::json &j);
void write_raw_trajectories(std::ostream &out, const std::vector<RawTrajectory> &ts);
std::vector<RawTrajectory> read_raw_trajectories(std::istream &in);

class BackendFailure : public Error {
  public:
    BackendFailure(std::size_t step, const std::string &cause, RawTrajectory partial);
    std::size_t step() const { return step_; }
    const RawTrajectory &partial() const { return partial_; }

  private:
    std::size_t step_;
    RawTrajectory partial_;
};

struct RefineRequest {
    std::string query;
    std::optional<std::string> ground_truth;
    std::string trajectory_id;
    std::string model_id;
    std::string task_id;
};

/// One trajectory. Every intermediate output is drawn resample_count times
/// with one backend call per sample and reduced by select_representative.
/// Throws BackendFailure carrying the trajectory up to the failed step.
RawTrajectory run_self_refine(const RefineRequest &request, const SelfRefineConfig &cfg, GenerationBackend &backend,
                              const InterventionSpec &intervention, std::uint64_t seed);

/// Backend calls made by a completed run: (2 t_max + 1) * resample_count.
std::size_t expected_backend_calls(const SelfRefineConfig &cfg);

// ---------------------------------------------------------------- annotation

struct MatchContext {
    std::string query;
    int round = 1;
    std::string feedback; // fb_{round-1}
    std::string response; // y_round
};

struct MatchResult {
    int bit = 0;
    std::string reason;
};

class PatternMatcher {
  public:
    virtual ~PatternMatcher() = default;
    virtual MatchResult matches(const MatchContext &ctx, const std::string &pattern, const std::string &definition) = 0;
};

class ConstantMatcher final : public PatternMatcher {
  public:
    explicit ConstantMatcher(int bit) : bit_(bit) {}
    MatchResult matches(const MatchContext &, const std::string &, const std::string &) override;

  private:
    int bit_;
};

/// 1 when any keyword of the pattern occurs (case-insensitively) in the
/// feedback or the response of the round.
class KeywordMatcher final : public PatternMatcher {
  public:
    explicit KeywordMatcher(std::map<std::string, std::vector<std::string>> keywords);
    MatchResult matches(const MatchContext &ctx, const std::string &pattern, const std::string &definition) override;

  private:
    std::map<std::string, std::vector<std::string>> keywords_;
};

/// Asks a backend with the matcher prompt. The reply must start with "1" or
/// "0" (optionally "YES"/"NO"); the rest of the reply is the reason.
class BackendMatcher final : public PatternMatcher {
  public:
    BackendMatcher(GenerationBackend &backend, std::string prompt_template, std::uint64_t seed = 0);
    MatchResult matches(const MatchContext &ctx, const std::string &pattern, const std::string &definition) override;

  private:
    GenerationBackend &backend_;
    std::string template_;
    std::uint64_t seed_;
};

struct MatchReason {
    int round = 0;
    std::string pattern;
    int bit = 0;
    std::string reason;
};

struct Annotation {
    Trajectory trajectory;
    std::vector<MatchReason> reasons; // sidecar log
};

/// One bit per (pattern, round) from the (fb_{t-1}, y_t) record of each
/// round, and one bit per schema metric (1 when the metric rose relative to
/// the previous round). Outcomes are left empty. Throws MatcherFailure or
/// MissingMetricValues.
Annotation annotate(const RawTrajectory &raw, const PatternSchema &schema, PatternMatcher &matcher);

// ---------------------------------------------------------------- outcomes

enum class OutcomeKind : std::uint8_t { ExactMatch, PairedMetricImprovement };
enum class MetricDirection : std::uint8_t { HigherBetter, LowerBetter };

struct OutcomeRule {
    std::string name;
    OutcomeKind kind = OutcomeKind::ExactMatch;
    MetricDirection direction = MetricDirection::HigherBetter;
};

struct MetricPair {
    double initial = 0.0; // metric of y_0
    double final = 0.0;   // metric of y_T
};

/// Trims whitespace, unwraps \boxed{..}, $..$, \(..\) and \[..\], and drops
/// trailing punctuation.
std::string normalize_answer(const std::string &s);

/// Last \boxed{..} if present, else the text after the last "answer:", else
/// the whole response.
std::string extract_final_answer(const std::string &response);

/// ExactMatch: 1 iff the normalized final answer equals the normalized
/// ground truth. PairedMetricImprovement: 1 iff the final metric strictly
/// improves on the initial one; ties give 0.
std::map<std::string, int> score_outcome(const RawTrajectory &raw, const std::vector<OutcomeRule> &rules,
                                         const std::map<std::string, MetricPair> &metric_inputs = {});

} // namespace reflcausal
