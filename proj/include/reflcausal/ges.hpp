#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reflcausal/dataset.hpp"
#include "reflcausal/graph.hpp"
#include "reflcausal/scoring.hpp"

namespace reflcausal {

struct GesConfig {
    ScoreFn score;
    ConstraintMask mask; // empty mask = unconstrained
    std::optional<std::size_t> max_parents;
    std::uint64_t seed = 0;
};

enum class GesPhase : std::uint8_t { FES, BES };

struct GesStep {
    GesPhase phase = GesPhase::FES;
    std::string op;
    double score_delta = 0.0;
};

struct GesTrace {
    std::vector<GesStep> steps;
    double final_score = 0.0;
};

struct GesResult {
    Pdag graph;
    GesTrace trace;
};

/// Forward then backward equivalence search from the empty graph (plus any
/// required edges). Each step applies the valid operator with the largest
/// strictly positive score change; ties go to the smallest operator key.
GesResult ges(const BinaryDataset &data, const GesConfig &cfg);

/// Parent set of the outcome proposed by one or more discovery runs.
struct CandidateParentSet {
    NodeSet members;
    std::vector<std::pair<std::size_t, ScoreKind>> provenance; // (fold, score)

    std::vector<std::string> labels(const BinaryDataset &data) const;
};

struct CandidateRun {
    std::size_t fold = 0;
    ScoreKind score = ScoreKind::BDs;
    std::optional<NodeSet> parents; // empty optional: run failed
    std::string error;
};

struct CandidateSearch {
    std::vector<CandidateParentSet> candidates; // first-seen order over (fold, score)
    std::vector<CandidateRun> runs;
};

/// Runs ges on the training complement of every fold for every score and
/// collects the distinct nonempty outcome parent sets. Runs are independent
/// and use up to `jobs` threads; results do not depend on `jobs`.
CandidateSearch outcome_parent_candidates(const BinaryDataset &data, const FoldPlan &folds,
                                          const std::vector<ScoreFn> &scores, const ConstraintMask &mask,
                                          std::size_t jobs = 1, std::optional<std::size_t> max_parents = std::nullopt);

} // namespace reflcausal
