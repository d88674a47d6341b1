#include "reflcausal/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "reflcausal/errors.hpp"
#include "reflcausal/rng.hpp"

namespace reflcausal {

using nlohmann::json;

const char *to_string(VariableKind kind) {
    switch (kind) {
    case VariableKind::SemanticPattern:
        return "pattern";
    case VariableKind::UncertaintyDelta:
        return "uncertainty";
    case VariableKind::Outcome:
        return "outcome";
    }
    return "?";
}

std::string VariableId::label() const {
    if (!round) return name;
    return name + "@" + std::to_string(*round);
}

bool column_order_less(const VariableId &a, const VariableId &b) {
    const bool ao = a.kind == VariableKind::Outcome;
    const bool bo = b.kind == VariableKind::Outcome;
    if (ao != bo) return bo;
    if (ao) return a.name < b.name;
    if (a.round != b.round) return a.round.value_or(0) < b.round.value_or(0);
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.name < b.name;
}

// ---------------------------------------------------------------------------
// PatternSchema

PatternSchema PatternSchema::from_json(const json &j) {
    PatternSchema s;
    try {
        s.patterns = j.at("patterns").get<std::vector<std::string>>();
        if (j.contains("metrics")) s.metrics = j.at("metrics").get<std::vector<std::string>>();
        s.rounds = j.at("rounds").get<int>();
        if (j.contains("outcomes")) s.outcomes = j.at("outcomes").get<std::vector<std::string>>();
        if (j.contains("definitions")) {
            s.definitions = j.at("definitions").get<std::map<std::string, std::string>>();
        }
    } catch (const json::exception &e) {
        throw InconsistentSchema(std::string("bad schema: ") + e.what());
    }
    s.validate();
    return s;
}

PatternSchema PatternSchema::load(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open schema file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        throw InconsistentSchema("schema file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

json PatternSchema::to_json() const {
    json j;
    j["patterns"] = patterns;
    j["metrics"] = metrics;
    j["rounds"] = rounds;
    j["outcomes"] = outcomes;
    if (!definitions.empty()) j["definitions"] = definitions;
    return j;
}

void PatternSchema::validate() const {
    if (rounds < 1) throw InconsistentSchema("schema needs rounds >= 1");
    std::set<std::string> seen;
    for (const auto *list : {&patterns, &metrics}) {
        for (const auto &n : *list) {
            if (n.empty() || n.find_first_of("@ \t,") != std::string::npos) {
                throw InconsistentSchema("invalid variable name '" + n + "'");
            }
            if (!seen.insert(n).second) throw InconsistentSchema("duplicate variable name " + n);
        }
    }
}

bool PatternSchema::has_pattern(const std::string &name) const {
    return std::find(patterns.begin(), patterns.end(), name) != patterns.end();
}

bool PatternSchema::has_metric(const std::string &name) const {
    return std::find(metrics.begin(), metrics.end(), name) != metrics.end();
}

std::string PatternSchema::description(const std::string &pattern) const {
    auto it = definitions.find(pattern);
    return it == definitions.end() ? pattern : it->second;
}

// ---------------------------------------------------------------------------
// Trajectory files

json to_json(const Trajectory &t) {
    json rounds = json::array();
    for (const auto &r : t.rounds) {
        rounds.push_back({{"round", r.round}, {"patterns", r.pattern_bits}, {"uncertainty", r.uncertainty_bits}});
    }
    return {{"trajectory_id", t.trajectory_id},
            {"model_id", t.model_id},
            {"task_id", t.task_id},
            {"rounds", rounds},
            {"outcomes", t.outcomes}};
}

namespace {

int read_bit(const json &v, std::size_t line, const std::string &what) {
    if (!v.is_number_integer()) throw MalformedRecord(line, what + " must be 0 or 1");
    const auto b = v.get<long long>();
    if (b != 0 && b != 1) throw MalformedRecord(line, what + " must be 0 or 1");
    return static_cast<int>(b);
}

std::string read_string(const json &obj, const char *key, std::size_t line) {
    if (!obj.contains(key) || !obj.at(key).is_string()) {
        throw MalformedRecord(line, std::string("field '") + key + "' missing or not a string");
    }
    return obj.at(key).get<std::string>();
}

std::map<std::string, int> read_bits(const json &obj, const char *key, std::size_t line,
                                     const std::vector<std::string> &declared, int round) {
    std::map<std::string, int> bits;
    if (!obj.contains(key)) {
        if (declared.empty()) return bits;
        throw MalformedRecord(line, "round " + std::to_string(round) + " has no '" + key + "'");
    }
    const json &m = obj.at(key);
    if (!m.is_object()) throw MalformedRecord(line, std::string("'") + key + "' must be an object");
    for (const auto &[name, v] : m.items()) {
        if (std::find(declared.begin(), declared.end(), name) == declared.end()) {
            throw UnknownPattern(name);
        }
        bits[name] = read_bit(v, line, name + "@" + std::to_string(round));
    }
    for (const auto &name : declared) {
        if (!bits.contains(name)) {
            throw MalformedRecord(line, "missing bit for " + name + "@" + std::to_string(round));
        }
    }
    return bits;
}

Trajectory parse_record(const json &j, std::size_t line, const PatternSchema &schema) {
    if (!j.is_object()) throw MalformedRecord(line, "record is not an object");
    Trajectory t;
    t.trajectory_id = read_string(j, "trajectory_id", line);
    t.model_id = read_string(j, "model_id", line);
    t.task_id = read_string(j, "task_id", line);
    if (!j.contains("rounds") || !j.at("rounds").is_array()) {
        throw MalformedRecord(line, "field 'rounds' missing or not an array");
    }
    const json &rounds = j.at("rounds");
    if (rounds.size() != static_cast<std::size_t>(schema.rounds)) {
        throw MalformedRecord(line, "expected " + std::to_string(schema.rounds) + " rounds, found " +
                                        std::to_string(rounds.size()));
    }
    for (std::size_t i = 0; i < rounds.size(); ++i) {
        const json &r = rounds[i];
        if (!r.is_object() || !r.contains("round") || !r.at("round").is_number_integer()) {
            throw MalformedRecord(line, "round entry " + std::to_string(i) + " lacks an integer 'round'");
        }
        RoundRecord rec;
        rec.round = r.at("round").get<int>();
        if (rec.round != static_cast<int>(i) + 1) {
            throw MalformedRecord(line, "rounds must be contiguous 1.." + std::to_string(schema.rounds) +
                                            "; expected round " + std::to_string(i + 1) + ", found " +
                                            std::to_string(rec.round));
        }
        rec.pattern_bits = read_bits(r, "patterns", line, schema.patterns, rec.round);
        rec.uncertainty_bits = read_bits(r, "uncertainty", line, schema.metrics, rec.round);
        t.rounds.push_back(std::move(rec));
    }
    if (!j.contains("outcomes") || !j.at("outcomes").is_object()) {
        throw MalformedRecord(line, "field 'outcomes' missing or not an object");
    }
    for (const auto &[name, v] : j.at("outcomes").items()) {
        t.outcomes[name] = read_bit(v, line, "outcome " + name);
    }
    return t;
}

} // namespace

std::vector<Trajectory> parse_trajectories(std::istream &in, const PatternSchema &schema) {
    schema.validate();
    std::vector<Trajectory> out;
    std::set<std::string> ids;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error &e) {
            throw MalformedRecord(line, std::string("invalid JSON: ") + e.what());
        }
        Trajectory t = parse_record(j, line, schema);
        if (!ids.insert(t.trajectory_id).second) throw DuplicateTrajectoryId(t.trajectory_id);
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<Trajectory> ingest_trajectories(const std::filesystem::path &path,
                                            const PatternSchema &schema) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open trajectory file " + path.string());
    return parse_trajectories(in, schema);
}

void write_trajectories(std::ostream &out, std::span<const Trajectory> trajectories) {
    for (const auto &t : trajectories) out << to_json(t).dump() << '\n';
}

PatternSchema infer_schema(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open trajectory file " + path.string());
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
            PatternSchema s;
            const json &rounds = j.at("rounds");
            s.rounds = static_cast<int>(rounds.size());
            for (const auto &[name, _] : rounds.at(0).at("patterns").items()) s.patterns.push_back(name);
            if (rounds.at(0).contains("uncertainty")) {
                for (const auto &[name, _] : rounds.at(0).at("uncertainty").items()) s.metrics.push_back(name);
            }
            for (const auto &[name, _] : j.at("outcomes").items()) s.outcomes.push_back(name);
            s.validate();
            return s;
        } catch (const json::exception &e) {
            throw MalformedRecord(line, std::string("cannot infer schema: ") + e.what());
        }
    }
    throw MalformedRecord(0, "cannot infer schema from an empty file");
}

// ---------------------------------------------------------------------------
// BinaryDataset

BinaryDataset::BinaryDataset(std::vector<VariableId> variables,
                             std::vector<std::vector<std::uint8_t>> columns, std::size_t outcome_index)
    : variables_(std::move(variables)), columns_(std::move(columns)), outcome_index_(outcome_index) {
    if (variables_.size() != columns_.size()) {
        throw InconsistentSchema("column count does not match variable count");
    }
    if (!variables_.empty() && outcome_index_ >= variables_.size()) {
        throw InconsistentSchema("outcome index out of range");
    }
    n_rows_ = columns_.empty() ? 0 : columns_.front().size();
    for (const auto &c : columns_) {
        if (c.size() != n_rows_) throw InconsistentSchema("ragged dataset columns");
        for (auto v : c) {
            if (v > 1) throw InconsistentSchema("dataset cells must be 0 or 1");
        }
    }
}

std::optional<std::size_t> BinaryDataset::index_of(const std::string &label) const {
    for (std::size_t i = 0; i < variables_.size(); ++i) {
        if (variables_[i].label() == label) return i;
    }
    return std::nullopt;
}

std::vector<std::string> BinaryDataset::labels() const {
    std::vector<std::string> out;
    out.reserve(variables_.size());
    for (const auto &v : variables_) out.push_back(v.label());
    return out;
}

BinaryDataset BinaryDataset::subset(std::span<const std::size_t> rows) const {
    std::vector<std::vector<std::uint8_t>> cols(columns_.size());
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        cols[c].reserve(rows.size());
        for (auto r : rows) cols[c].push_back(columns_[c].at(r));
    }
    return BinaryDataset(variables_, std::move(cols), outcome_index_);
}

BinaryDataset flatten(std::span<const Trajectory> trajectories, const std::string &outcome_name) {
    if (trajectories.empty()) throw EmptyData("cannot flatten an empty trajectory list");
    const Trajectory &first = trajectories.front();
    if (first.rounds.empty()) throw InconsistentSchema("trajectory " + first.trajectory_id + " has no rounds");

    std::vector<VariableId> vars;
    for (const auto &r : first.rounds) {
        for (const auto &[name, _] : r.pattern_bits) {
            vars.push_back({VariableKind::SemanticPattern, name, r.round});
        }
        for (const auto &[name, _] : r.uncertainty_bits) {
            vars.push_back({VariableKind::UncertaintyDelta, name, r.round});
        }
    }
    std::sort(vars.begin(), vars.end(), column_order_less);
    vars.push_back({VariableKind::Outcome, outcome_name, std::nullopt});

    auto same_keys = [](const std::map<std::string, int> &a, const std::map<std::string, int> &b) {
        return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(),
                                                  [](auto &x, auto &y) { return x.first == y.first; });
    };

    std::vector<std::vector<std::uint8_t>> cols(vars.size());
    for (auto &c : cols) c.reserve(trajectories.size());
    for (const auto &t : trajectories) {
        if (t.rounds.size() != first.rounds.size()) {
            throw InconsistentSchema("trajectory " + t.trajectory_id + " has a different round count");
        }
        for (std::size_t i = 0; i < t.rounds.size(); ++i) {
            if (t.rounds[i].round != first.rounds[i].round ||
                !same_keys(t.rounds[i].pattern_bits, first.rounds[i].pattern_bits) ||
                !same_keys(t.rounds[i].uncertainty_bits, first.rounds[i].uncertainty_bits)) {
                throw InconsistentSchema("trajectory " + t.trajectory_id + " deviates from the pattern schema");
            }
        }
        auto outcome = t.outcomes.find(outcome_name);
        if (outcome == t.outcomes.end()) throw MissingOutcome(outcome_name);
        for (std::size_t c = 0; c + 1 < vars.size(); ++c) {
            const auto &v = vars[c];
            const auto &rec = t.rounds[static_cast<std::size_t>(*v.round - first.rounds.front().round)];
            const auto &bits = v.kind == VariableKind::SemanticPattern ? rec.pattern_bits : rec.uncertainty_bits;
            cols[c].push_back(static_cast<std::uint8_t>(bits.at(v.name)));
        }
        cols.back().push_back(static_cast<std::uint8_t>(outcome->second));
    }
    const std::size_t outcome_index = vars.size() - 1;
    return BinaryDataset(std::move(vars), std::move(cols), outcome_index);
}

std::vector<Trajectory> to_trajectories(const BinaryDataset &data) {
    int max_round = 0;
    for (const auto &v : data.variables()) max_round = std::max(max_round, v.round.value_or(0));
    std::vector<Trajectory> out(data.n_rows());
    for (std::size_t r = 0; r < data.n_rows(); ++r) {
        Trajectory &t = out[r];
        t.trajectory_id = "row-" + std::to_string(r);
        t.rounds.resize(static_cast<std::size_t>(max_round));
        for (int i = 0; i < max_round; ++i) t.rounds[static_cast<std::size_t>(i)].round = i + 1;
        for (std::size_t c = 0; c < data.n_cols(); ++c) {
            const auto &v = data.variable(c);
            const int bit = data.at(r, c);
            switch (v.kind) {
            case VariableKind::Outcome:
                t.outcomes[v.name] = bit;
                break;
            case VariableKind::SemanticPattern:
                t.rounds[static_cast<std::size_t>(*v.round - 1)].pattern_bits[v.name] = bit;
                break;
            case VariableKind::UncertaintyDelta:
                t.rounds[static_cast<std::size_t>(*v.round - 1)].uncertainty_bits[v.name] = bit;
                break;
            }
        }
    }
    return out;
}

void write_csv(std::ostream &out, const BinaryDataset &data) {
    const auto labels = data.labels();
    for (std::size_t c = 0; c < labels.size(); ++c) out << (c ? "," : "") << labels[c];
    out << '\n';
    for (std::size_t r = 0; r < data.n_rows(); ++r) {
        for (std::size_t c = 0; c < data.n_cols(); ++c) out << (c ? "," : "") << int(data.at(r, c));
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Folds

std::vector<std::vector<std::size_t>> FoldPlan::folds() const {
    std::vector<std::vector<std::size_t>> out(k);
    for (std::size_t r = 0; r < assignments.size(); ++r) out[assignments[r]].push_back(r);
    return out;
}

std::vector<std::size_t> FoldPlan::test_rows(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < assignments.size(); ++r) {
        if (assignments[r] == fold) out.push_back(r);
    }
    return out;
}

std::vector<std::size_t> FoldPlan::train_rows(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < assignments.size(); ++r) {
        if (assignments[r] != fold) out.push_back(r);
    }
    return out;
}

FoldPlan stratified_kfold(const BinaryDataset &data, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw TooFewRows("k-fold needs k >= 2");
    if (k > data.n_rows()) {
        throw TooFewRows("k = " + std::to_string(k) + " exceeds row count " + std::to_string(data.n_rows()));
    }
    // Rows are put in canonical content order before shuffling, so the
    // multiset of rows in each fold does not depend on input row order.
    auto row_less = [&](std::size_t a, std::size_t b) {
        for (std::size_t c = 0; c < data.n_cols(); ++c) {
            if (data.at(a, c) != data.at(b, c)) return data.at(a, c) < data.at(b, c);
        }
        return false;
    };
    std::vector<std::size_t> neg, pos;
    const auto outcome = data.column(data.outcome_index());
    for (std::size_t r = 0; r < data.n_rows(); ++r) (outcome[r] ? pos : neg).push_back(r);
    std::stable_sort(neg.begin(), neg.end(), row_less);
    std::stable_sort(pos.begin(), pos.end(), row_less);
    Rng rng(seed);
    shuffle(neg, rng);
    shuffle(pos, rng);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignments.assign(data.n_rows(), 0);
    std::size_t i = 0;
    for (auto r : neg) plan.assignments[r] = i++ % k;
    for (auto r : pos) plan.assignments[r] = i++ % k;
    return plan;
}

std::vector<std::vector<std::size_t>> group_folds(const FoldPlan &plan, std::size_t n_groups) {
    if (n_groups == 0 || plan.k % n_groups != 0) {
        throw IndivisibleGrouping(std::to_string(plan.k) + " folds cannot form " + std::to_string(n_groups) +
                                  " equal groups");
    }
    const std::size_t per = plan.k / n_groups;
    std::vector<std::vector<std::size_t>> groups(n_groups);
    for (std::size_t f = 0; f < plan.k; ++f) groups[f / per].push_back(f);
    return groups;
}

} // namespace reflcausal
