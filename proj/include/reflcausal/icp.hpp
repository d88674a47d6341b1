#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reflcausal/dataset.hpp"
#include "reflcausal/ges.hpp"
#include "reflcausal/stats.hpp"

namespace reflcausal {

/// CVLL of one parent set on every fold of a plan. `std` is the sample
/// standard deviation across folds.
struct FoldCvll {
    std::vector<double> per_fold;
    double mean = 0.0;
    double std = 0.0;
};

FoldCvll fold_cvll(const BinaryDataset &data, const FoldPlan &folds, const NodeSet &parents, double alpha = 1.0);

struct CvllEntry {
    CandidateParentSet candidate;
    FoldCvll cvll;
};

struct CvllReport {
    std::vector<CvllEntry> per_candidate; // input order
    std::size_t winner = 0;               // index into per_candidate

    const NodeSet &winning_set() const { return per_candidate.at(winner).candidate.members; }
};

/// Highest mean CVLL wins; exact ties go to the smaller set, then to the
/// lexicographically smaller one. Throws DomainError on an empty list.
CvllReport stage1_select(const BinaryDataset &data, const FoldPlan &folds,
                         const std::vector<CandidateParentSet> &candidates, double alpha = 1.0,
                         std::size_t jobs = 1);

/// (opt - base) / |base| * 100. Throws DomainError when base is 0.
double cvll_gain(double opt, double base);

struct UniquenessReport {
    FoldCvll empty, opt, full;
    double gain_vs_empty = 0.0;
    double gain_vs_full = 0.0;
    bool passes = false; // opt strictly above both baselines
};

/// Builds the report from already computed fold CVLLs.
UniquenessReport uniqueness_from(FoldCvll empty, FoldCvll opt, FoldCvll full);

/// Compares the winner against the empty set and against every non-outcome
/// variable.
UniquenessReport stage2_uniqueness(const BinaryDataset &data, const FoldPlan &folds, const NodeSet &winner,
                                   double alpha = 1.0);

enum class StabilityStatus : std::uint8_t { Stable, Moderate, Unstable };

const char *to_string(StabilityStatus s);

inline constexpr double kStabilityAlpha = 0.05;
inline constexpr double kSmallEffect = 0.06;
inline constexpr double kMediumEffect = 0.14;

/// Stable: both p > .05 and eta < .06. Moderate: both p > .05 and eta in
/// [.06, .14). Unstable otherwise.
StabilityStatus classify_stability(double levene_p, double anova_p, double eta_p_sq);

struct ParameterStability {
    std::string name;
    double mean = 0.0; // across usable folds
    std::pair<double, double> ci95;
    stats::TestResult levene;
    stats::TestResult anova;
    double eta_p_sq = 0.0;
    StabilityStatus status = StabilityStatus::Stable;
};

struct StabilityReport {
    std::vector<ParameterStability> per_parameter; // winner slopes in column order, intercept last
    std::vector<std::vector<double>> estimates;    // fold -> parameter values; empty row if skipped
    std::vector<std::size_t> skipped_folds;
    std::vector<std::string> warnings;
    std::size_t n_folds = 0;
    std::size_t n_groups = 0;

    bool all_stable_or_moderate() const;
    bool any_moderate() const;
};

/// Fits y ~ k . Pa + b by OLS on each of n_folds outcome-stratified folds,
/// groups the per-fold estimates into n_groups contiguous groups and runs
/// Levene's test and one-way ANOVA per parameter. A fold with a singular
/// design is skipped; fewer than 3 usable folds in a group raises
/// DegenerateGroup.
StabilityReport stage3_stability(const BinaryDataset &data, const NodeSet &winner, std::size_t n_folds = 20,
                                 std::size_t n_groups = 4, std::uint64_t seed = 0, std::size_t jobs = 1);

/// Same analysis on precomputed per-fold estimates (fold -> parameter
/// values, grouped contiguously).
StabilityReport stability_from_estimates(std::vector<std::vector<double>> estimates,
                                         std::vector<std::string> names, std::size_t n_groups);

struct PipelineConfig {
    std::size_t k = 5;
    std::vector<ScoreFn> scores{{ScoreKind::BDs, 1.0}, {ScoreKind::BDeu, 1.0}, {ScoreKind::BIC, 1.0},
                                {ScoreKind::K2, 1.0}};
    double alpha = 1.0; // CVLL pseudo-count
    std::uint64_t seed = 0;
    std::size_t stability_folds = 20;
    std::size_t stability_groups = 4;
    std::optional<std::size_t> max_parents;
    std::size_t jobs = 1;
};

struct PipelineResult {
    CandidateSearch search;
    std::optional<CvllReport> stage1;
    std::optional<UniquenessReport> stage2;
    std::optional<StabilityReport> stage3;
    NodeSet winner;
    bool ha_supported = false;
    bool moderate_flagged = false;
    std::vector<std::string> warnings;
};

/// Candidates from ensemble GES under the temporal mask, then stages 1-3.
/// H_a is supported when stage 2 passes and every parameter is Stable or
/// Moderate.
PipelineResult run_pipeline(const BinaryDataset &data, const PipelineConfig &cfg);

/// Runs stages 1-3 on a given candidate list (no discovery).
PipelineResult verify_candidates(const BinaryDataset &data, std::vector<CandidateParentSet> candidates,
                                 const PipelineConfig &cfg);

nlohmann::json to_json(const FoldCvll &c);
nlohmann::json to_json(const CvllReport &r, const BinaryDataset &data);
nlohmann::json to_json(const UniquenessReport &r);
nlohmann::json to_json(const StabilityReport &r);
nlohmann::json to_json(const PipelineResult &r, const BinaryDataset &data);

std::string render_cvll_table(const CvllReport &r, const BinaryDataset &data);
std::string render_uniqueness_table(const UniquenessReport &r);
std::string render_stability_table(const StabilityReport &r);

} // namespace reflcausal
