#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace reflcausal {

enum class VariableKind : std::uint8_t { SemanticPattern = 0, UncertaintyDelta = 1, Outcome = 2 };

const char *to_string(VariableKind kind);

/// A column of the binary matrix. Outcomes carry no round.
struct VariableId {
    VariableKind kind = VariableKind::SemanticPattern;
    std::string name;
    std::optional<int> round;

    /// "CO@2" for round variables, the bare name for outcomes.
    std::string label() const;

    bool operator==(const VariableId &) const = default;
};

/// Column order: round ascending, then kind, then name; outcomes last.
bool column_order_less(const VariableId &a, const VariableId &b);

/// Declares pattern names, uncertainty metric names, round count and outcome
/// names. `definitions` optionally maps a pattern to its human-readable
/// description (used for matcher and intervention prompts).
struct PatternSchema {
    std::vector<std::string> patterns;
    std::vector<std::string> metrics;
    int rounds = 0;
    std::vector<std::string> outcomes;
    std::map<std::string, std::string> definitions;

    static PatternSchema from_json(const nlohmann::json &j);
    static PatternSchema load(const std::filesystem::path &path);
    nlohmann::json to_json() const;
    void validate() const;

    bool has_pattern(const std::string &name) const;
    bool has_metric(const std::string &name) const;
    std::string description(const std::string &pattern) const;
};

struct RoundRecord {
    int round = 0;
    std::map<std::string, int> pattern_bits;
    std::map<std::string, int> uncertainty_bits;
};

struct Trajectory {
    std::string trajectory_id;
    std::string model_id;
    std::string task_id;
    std::vector<RoundRecord> rounds;
    std::map<std::string, int> outcomes;
};

nlohmann::json to_json(const Trajectory &t);

/// Parses line-delimited trajectory records. Blank lines are skipped; line
/// numbers in errors are 1-based.
std::vector<Trajectory> parse_trajectories(std::istream &in, const PatternSchema &schema);
std::vector<Trajectory> ingest_trajectories(const std::filesystem::path &path,
                                            const PatternSchema &schema);
void write_trajectories(std::ostream &out, std::span<const Trajectory> trajectories);

/// Builds a schema from the first record of a trajectory file; used when no
/// schema file is given. Throws MalformedRecord if the file has no records.
PatternSchema infer_schema(const std::filesystem::path &path);

/// Immutable binary matrix with one row per trajectory and one column per
/// variable. Stored column-major since scoring reads a few columns at a time.
class BinaryDataset {
  public:
    BinaryDataset() = default;
    BinaryDataset(std::vector<VariableId> variables, std::vector<std::vector<std::uint8_t>> columns,
                  std::size_t outcome_index);

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return variables_.size(); }
    std::size_t outcome_index() const { return outcome_index_; }
    const std::vector<VariableId> &variables() const { return variables_; }
    const VariableId &variable(std::size_t c) const { return variables_.at(c); }

    std::uint8_t at(std::size_t row, std::size_t col) const { return columns_[col][row]; }
    std::span<const std::uint8_t> column(std::size_t col) const { return columns_.at(col); }

    std::optional<std::size_t> index_of(const std::string &label) const;
    std::vector<std::string> labels() const;

    /// Rows in the given order (duplicates allowed).
    BinaryDataset subset(std::span<const std::size_t> rows) const;

    bool same_schema(const BinaryDataset &other) const { return variables_ == other.variables_; }
    bool operator==(const BinaryDataset &) const = default;

  private:
    std::vector<VariableId> variables_;
    std::vector<std::vector<std::uint8_t>> columns_;
    std::size_t outcome_index_ = 0;
    std::size_t n_rows_ = 0;
};

/// Flattens trajectories into the binary matrix with T * (patterns + metrics)
/// + 1 columns, the chosen outcome last.
BinaryDataset flatten(std::span<const Trajectory> trajectories, const std::string &outcome_name);

/// Inverse of flatten for a single-outcome dataset; trajectory ids are
/// "row-<i>" and model/task ids empty.
std::vector<Trajectory> to_trajectories(const BinaryDataset &data);

void write_csv(std::ostream &out, const BinaryDataset &data);

struct FoldPlan {
    std::size_t k = 0;
    std::vector<std::size_t> assignments; // row -> fold
    std::uint64_t seed = 0;

    /// Row indices of each fold, ascending.
    std::vector<std::vector<std::size_t>> folds() const;
    std::vector<std::size_t> test_rows(std::size_t fold) const;
    std::vector<std::size_t> train_rows(std::size_t fold) const;
};

/// Outcome-stratified K-fold assignment; deterministic in seed. Fold sizes
/// differ by at most one and so do per-fold positive counts.
FoldPlan stratified_kfold(const BinaryDataset &data, std::size_t k, std::uint64_t seed);

/// Splits fold indices 0..k-1 into n_groups contiguous groups of equal size.
std::vector<std::vector<std::size_t>> group_folds(const FoldPlan &plan, std::size_t n_groups);

} // namespace reflcausal
