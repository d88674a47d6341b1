#include "reflcausal/intervention.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>

#include "reflcausal/errors.hpp"

namespace reflcausal {

const char *to_string(InterventionMode m) { return m == InterventionMode::Emphasize ? "emphasize" : "suppress"; }

InterventionMode parse_intervention_mode(const std::string &s) {
    if (s == "emphasize") return InterventionMode::Emphasize;
    if (s == "suppress") return InterventionMode::Suppress;
    throw ValidationError("unknown intervention mode '" + s + "'");
}

void InterventionSpec::validate(int t_max) const {
    std::set<std::pair<std::string, int>> seen;
    for (const auto &t : targets) {
        if (t.round < 1 || t.round > t_max) {
            throw ValidationError(fmt::format("intervention round {} outside [1, {}]", t.round, t_max));
        }
        if (!seen.emplace(t.pattern, t.round).second) {
            throw ValidationError(fmt::format("duplicate intervention target {}@{}", t.pattern, t.round));
        }
    }
}

std::vector<const InterventionTarget *> InterventionSpec::at_round(int round) const {
    std::vector<const InterventionTarget *> out;
    for (const auto &t : targets) {
        if (t.round == round) out.push_back(&t);
    }
    return out;
}

std::string Factor::label() const { return fmt::format("{}@{}", pattern, round); }

std::vector<std::string> FactorialDesign::condition_names() const {
    std::vector<std::string> out;
    for (const auto &c : conditions) out.push_back(c.name);
    return out;
}

FactorialDesign build_conditions(const std::vector<Factor> &factors, std::vector<std::string> subjects) {
    if (factors.empty()) throw EmptyFactors();
    if (factors.size() > kMaxFactors) {
        throw TooManyFactors(fmt::format("{} factors requested; at most {} are supported", factors.size(), kMaxFactors));
    }
    std::set<Factor> unique(factors.begin(), factors.end());
    if (unique.size() != factors.size()) throw ValidationError("factorial design repeats a factor");

    FactorialDesign d;
    d.factors = factors;
    d.subjects = std::move(subjects);
    const std::uint32_t n = 1U << factors.size();
    for (std::uint32_t mask = 0; mask < n; ++mask) {
        Condition c;
        c.active = mask;
        for (std::size_t i = 0; i < factors.size(); ++i) {
            if (!(mask >> i & 1U)) continue;
            if (!c.name.empty()) c.name += " & ";
            c.name += factors[i].label();
            c.spec.targets.push_back({factors[i].pattern, factors[i].round, InterventionMode::Emphasize});
        }
        if (c.name.empty()) c.name = "None";
        d.conditions.push_back(std::move(c));
    }
    return d;
}

bool intervention_verdict(double p_value, double effect) {
    return p_value < kVerdictAlpha && effect >= kVerdictEffect;
}

InterventionReport analyze(const std::vector<std::string> &conditions, const std::vector<Observation> &observations) {
    if (conditions.size() < 2) throw IncompleteMatrix("analysis needs at least two conditions");
    std::map<std::string, std::size_t> cond_index;
    for (std::size_t j = 0; j < conditions.size(); ++j) {
        if (!cond_index.emplace(conditions[j], j).second) {
            throw IncompleteMatrix("duplicate condition '" + conditions[j] + "'");
        }
    }
    if (observations.empty()) throw IncompleteMatrix("no observations");

    // (model, subject) -> row; -1 marks a missing cell.
    std::map<std::pair<std::string, std::string>, std::vector<int>> cells;
    for (const auto &o : observations) {
        auto it = cond_index.find(o.condition);
        if (it == cond_index.end()) throw IncompleteMatrix("unknown condition '" + o.condition + "'");
        if (o.outcome > 1) throw IncompleteMatrix("outcomes must be 0 or 1");
        auto &row = cells.try_emplace({o.model, o.subject}, std::vector<int>(conditions.size(), -1)).first->second;
        if (row[it->second] != -1) {
            throw IncompleteMatrix(fmt::format("subject '{}' model '{}' has two outcomes for '{}'", o.subject,
                                               o.model, o.condition));
        }
        row[it->second] = o.outcome;
    }

    InterventionReport r;
    r.conditions = conditions;
    std::map<std::string, std::vector<std::vector<std::uint8_t>>> by_model;
    std::vector<std::vector<std::uint8_t>> blocks;
    for (const auto &[key, row] : cells) {
        std::vector<std::uint8_t> b;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] < 0) {
                throw IncompleteMatrix(fmt::format("subject '{}' model '{}' lacks condition '{}'", key.second,
                                                   key.first, conditions[j]));
            }
            b.push_back(static_cast<std::uint8_t>(row[j]));
        }
        by_model[key.first].push_back(b);
        blocks.push_back(std::move(b));
    }
    // Every model must cover the same subjects for the design to be matched.
    std::set<std::string> subjects;
    for (const auto &[key, row] : cells) subjects.insert(key.second);
    for (const auto &[model, rows] : by_model) {
        if (rows.size() != subjects.size()) {
            throw IncompleteMatrix(fmt::format("model '{}' covers {} of {} subjects", model, rows.size(), subjects.size()));
        }
    }

    r.n_blocks = blocks.size();
    for (const auto &[model, rows] : by_model) {
        r.models.push_back(model);
        r.per_model.push_back({model, stats::cochran_q(rows)});
    }
    r.counts.assign(conditions.size(), std::vector<std::size_t>(r.models.size(), 0));
    r.per_condition_means.assign(conditions.size(), 0.0);
    std::size_t m = 0;
    for (const auto &[model, rows] : by_model) {
        for (const auto &b : rows) {
            for (std::size_t j = 0; j < b.size(); ++j) r.counts[j][m] += b[j];
        }
        ++m;
    }
    for (std::size_t j = 0; j < conditions.size(); ++j) {
        std::size_t total = 0;
        for (auto c : r.counts[j]) total += c;
        r.per_condition_means[j] = static_cast<double>(total) / static_cast<double>(r.n_blocks);
    }
    r.q_test = stats::cochran_q(blocks);
    r.verdict = intervention_verdict(r.q_test.p_value, r.q_test.effect_size.value_or(0.0));
    return r;
}

InterventionReport analyze_matrix(const std::vector<std::string> &conditions,
                                  const std::vector<std::vector<std::uint8_t>> &matrix) {
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        if (matrix[i].size() != conditions.size()) {
            throw IncompleteMatrix(fmt::format("row {} has {} entries for {} conditions", i, matrix[i].size(),
                                               conditions.size()));
        }
        for (std::size_t j = 0; j < conditions.size(); ++j) {
            obs.push_back({fmt::format("s{:06}", i), "", conditions[j], matrix[i][j]});
        }
    }
    return analyze(conditions, obs);
}

namespace {

nlohmann::json test_json(const stats::TestResult &t) {
    return {{"Q", t.statistic}, {"df", t.df1}, {"p", t.p_value}, {"effect", t.effect_size.value_or(0.0)}};
}

} // namespace

nlohmann::json to_json(const InterventionReport &r) {
    using nlohmann::json;
    json per_model = json::array();
    for (const auto &t : r.per_model) per_model.push_back({{"model", t.model}, {"test", test_json(t.q_test)}});
    return {{"conditions", r.conditions},
            {"models", r.models},
            {"counts", r.counts},
            {"per_condition_means", r.per_condition_means},
            {"n_blocks", r.n_blocks},
            {"cochran_q", test_json(r.q_test)},
            {"per_model", per_model},
            {"verdict", r.verdict}};
}

std::string render_intervention_table(const InterventionReport &r) {
    std::size_t width = 9;
    for (const auto &c : r.conditions) width = std::max(width, c.size());
    std::string out = fmt::format("{:<{}}", "Condition", width);
    for (const auto &m : r.models) out += fmt::format("  {:>10}", m.empty() ? "count" : m);
    out += "\n";
    for (std::size_t j = 0; j < r.conditions.size(); ++j) {
        out += fmt::format("{:<{}}", r.conditions[j], width);
        for (auto c : r.counts[j]) out += fmt::format("  {:>10}", c);
        out += "\n";
    }
    out += fmt::format("Cochran's Q({:g}) = {:.3f}, p = {:.3f}, effect = {:.3f}, N = {}; H_a^i {}\n", r.q_test.df1,
                       r.q_test.statistic, r.q_test.p_value, r.q_test.effect_size.value_or(0.0), r.n_blocks,
                       r.verdict ? "supported" : "not supported");
    return out;
}

} // namespace reflcausal
