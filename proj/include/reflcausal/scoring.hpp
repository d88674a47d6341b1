#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "reflcausal/dataset.hpp"
#include "reflcausal/graph.hpp"

namespace reflcausal {

enum class ScoreKind : std::uint8_t { BDs = 0, BDeu = 1, BIC = 2, K2 = 3 };

const char *to_string(ScoreKind kind);
/// Case-insensitive; throws ValidationError on unknown names.
ScoreKind parse_score_kind(const std::string &name);

struct ScoreFn {
    ScoreKind kind = ScoreKind::BDs;
    double alpha = 1.0; // equivalent sample size, ignored by BIC and K2

    bool operator==(const ScoreFn &) const = default;
};

/// Counts of a binary variable per observed parent configuration. A
/// configuration is encoded with bit i holding the value of parents[i].
struct CountTable {
    std::vector<std::uint64_t> configs; // ascending
    std::vector<std::uint32_t> n0;
    std::vector<std::uint32_t> n1;

    std::size_t n_configs() const { return configs.size(); }
    std::uint64_t total() const;
};

/// At most 63 parents.
CountTable count_table(const BinaryDataset &data, std::size_t v, const NodeSet &parents);

/// Decomposable local score, natural log. BDs spreads the prior over the q~
/// observed parent configurations, BDeu over all 2^|Pa|; BIC penalises
/// 2^|Pa| free parameters; K2 uses a uniform Dirichlet(1).
double local_score(const BinaryDataset &data, std::size_t v, const NodeSet &parents, const ScoreFn &fn);
double local_score(const CountTable &table, std::size_t n_parents, const ScoreFn &fn);

/// Score of the DAG extension of g (g itself when fully directed).
double total_score(const BinaryDataset &data, const Pdag &g, const ScoreFn &fn);

/// Thread-safe memo of local scores for one dataset and score function.
class ScoreCache {
  public:
    ScoreCache(const BinaryDataset &data, ScoreFn fn) : data_(data), fn_(fn) {}

    double local(std::size_t v, const NodeSet &parents);
    const ScoreFn &fn() const { return fn_; }
    const BinaryDataset &data() const { return data_; }
    std::size_t size() const;

  private:
    struct KeyHash {
        std::size_t operator()(const std::vector<std::size_t> &key) const;
    };

    const BinaryDataset &data_;
    ScoreFn fn_;
    mutable std::mutex mutex_;
    std::unordered_map<std::vector<std::size_t>, double, KeyHash> memo_;
};

/// Mean per-row log predictive probability of the outcome column of `test`
/// under a Dirichlet-smoothed table fitted on `train` (pseudo-count
/// alpha / (q~ r) per cell, q~ counted on train). Unseen test
/// configurations use the smoothed training marginal.
double cvll(const BinaryDataset &train, const BinaryDataset &test, std::size_t outcome, const NodeSet &parents,
            double alpha = 1.0);

/// Local score of every variable under its parents in `dag`, one per line.
std::string score_trace(const BinaryDataset &data, const Pdag &dag, const ScoreFn &fn);

} // namespace reflcausal
