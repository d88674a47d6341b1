#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reflcausal/stats.hpp"

namespace reflcausal {

enum class InterventionMode : std::uint8_t { Emphasize, Suppress };

const char *to_string(InterventionMode m);
InterventionMode parse_intervention_mode(const std::string &s);

struct InterventionTarget {
    std::string pattern;
    int round = 1;
    InterventionMode mode = InterventionMode::Emphasize;

    auto operator<=>(const InterventionTarget &) const = default;
};

/// Prompt constraints applied at selected self-refine rounds.
struct InterventionSpec {
    std::vector<InterventionTarget> targets;

    /// Throws ValidationError for a round outside [1, t_max] or a repeated
    /// (pattern, round).
    void validate(int t_max) const;
    std::vector<const InterventionTarget *> at_round(int round) const;
    bool empty() const { return targets.empty(); }
};

struct Factor {
    std::string pattern;
    int round = 1;

    std::string label() const; // "CO@2"
    auto operator<=>(const Factor &) const = default;
};

struct Condition {
    std::uint32_t active = 0; // bit i set: factor i emphasized
    std::string name;         // "None", "CO@2", "CO@2 & Sp@4"
    InterventionSpec spec;
};

struct FactorialDesign {
    std::vector<Factor> factors;
    std::vector<Condition> conditions;
    std::vector<std::string> subjects;

    std::vector<std::string> condition_names() const;
};

inline constexpr std::size_t kMaxFactors = 4;

/// All 2^m activation combinations in increasing bitmask order. Throws
/// EmptyFactors, TooManyFactors (m > 4) or ValidationError on a repeated
/// factor.
FactorialDesign build_conditions(const std::vector<Factor> &factors, std::vector<std::string> subjects = {});

/// One matched binary outcome.
struct Observation {
    std::string subject;
    std::string model;
    std::string condition;
    std::uint8_t outcome = 0;
};

struct ModelTest {
    std::string model;
    stats::TestResult q_test;
};

struct InterventionReport {
    std::vector<std::string> conditions;
    std::vector<std::string> models;                // sorted
    std::vector<std::vector<std::size_t>> counts;   // condition x model, count of 1s
    std::vector<double> per_condition_means;        // over blocks
    std::size_t n_blocks = 0;                       // (subject, model) pairs
    stats::TestResult q_test;                       // pooled over (subject, model) blocks
    std::vector<ModelTest> per_model;               // one test per model, subjects as blocks
    bool verdict = false;
};

inline constexpr double kVerdictAlpha = 0.05;
inline constexpr double kVerdictEffect = 0.06;

/// p < .05 and effect >= .06.
bool intervention_verdict(double p_value, double effect);

/// Cochran's Q across conditions with (subject, model) pairs as blocks.
/// Every block must have exactly one outcome per condition
/// (IncompleteMatrix otherwise); unknown conditions are rejected the same
/// way.
InterventionReport analyze(const std::vector<std::string> &conditions, const std::vector<Observation> &observations);

/// Single-model convenience: rows are subjects, columns follow `conditions`.
InterventionReport analyze_matrix(const std::vector<std::string> &conditions,
                                  const std::vector<std::vector<std::uint8_t>> &matrix);

nlohmann::json to_json(const InterventionReport &r);

/// Grid of correct counts (conditions down, models across) followed by the
/// test line.
std::string render_intervention_table(const InterventionReport &r);

} // namespace reflcausal
