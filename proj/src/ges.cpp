#include "reflcausal/ges.hpp"

#include <algorithm>
#include <map>

#include "reflcausal/errors.hpp"
#include "reflcausal/parallel.hpp"

namespace reflcausal {

namespace {

// Smallest score change accepted as an improvement; guards against
// accepting pure rounding noise on exactly tied configurations.
constexpr double kMinGain = 1e-9;

template <typename Op> struct Scored {
    Op op;
    double delta;
};

template <typename Op> void rank(std::vector<Scored<Op>> &ops) {
    std::sort(ops.begin(), ops.end(), [](const Scored<Op> &a, const Scored<Op> &b) {
        if (a.delta != b.delta) return a.delta > b.delta;
        return a.op < b.op;
    });
}

Pdag initial_graph(std::size_t n, const ConstraintMask &mask) {
    Pdag g(n);
    for (auto [a, b] : mask.required_edges()) g.add_directed(a, b);
    return complete(g, mask);
}

// Applies the best operator whose completion succeeds; returns false when no
// operator improves the score.
template <typename Op>
bool step(Pdag &g, std::vector<Scored<Op>> &ops, const ConstraintMask &mask, GesPhase phase, GesTrace &trace) {
    rank(ops);
    for (const auto &cand : ops) {
        if (!(cand.delta > kMinGain)) return false;
        try {
            g = apply_and_complete(g, cand.op, mask);
        } catch (const ConstraintViolation &) {
            continue;
        } catch (const NotExtendable &) {
            continue;
        }
        trace.steps.push_back({phase, describe(cand.op), cand.delta});
        return true;
    }
    return false;
}

} // namespace

GesResult ges(const BinaryDataset &data, const GesConfig &cfg) {
    const std::size_t n = data.n_cols();
    if (n == 0) throw EmptyData("ges needs at least one variable");
    if (cfg.mask.n_vars() != 0 && cfg.mask.n_vars() != n) throw ConstraintViolation("mask size does not match data");
    if (cfg.max_parents && *cfg.max_parents == 0) throw DomainError("max_parents must be at least 1");

    ScoreCache cache(data, cfg.score);
    GesResult result;
    Pdag &g = result.graph;
    g = initial_graph(n, cfg.mask);

    for (;;) {
        std::vector<Scored<InsertOp>> ops;
        for (auto &op : valid_inserts(g, cfg.mask, cfg.max_parents)) {
            const NodeSet before = insert_parents_before(g, op);
            NodeSet after = before;
            after.insert(std::lower_bound(after.begin(), after.end(), op.x), op.x);
            const double delta = cache.local(op.y, after) - cache.local(op.y, before);
            ops.push_back({std::move(op), delta});
        }
        if (!step(g, ops, cfg.mask, GesPhase::FES, result.trace)) break;
    }
    for (;;) {
        std::vector<Scored<DeleteOp>> ops;
        for (auto &op : valid_deletes(g, cfg.mask)) {
            const NodeSet after = delete_parents_after(g, op);
            NodeSet before = after;
            before.insert(std::lower_bound(before.begin(), before.end(), op.x), op.x);
            const double delta = cache.local(op.y, after) - cache.local(op.y, before);
            ops.push_back({std::move(op), delta});
        }
        if (!step(g, ops, cfg.mask, GesPhase::BES, result.trace)) break;
    }
    result.trace.final_score = total_score(data, g, cfg.score);
    return result;
}

std::vector<std::string> CandidateParentSet::labels(const BinaryDataset &data) const {
    std::vector<std::string> out;
    for (auto m : members) out.push_back(data.variable(m).label());
    return out;
}

CandidateSearch outcome_parent_candidates(const BinaryDataset &data, const FoldPlan &folds,
                                          const std::vector<ScoreFn> &scores, const ConstraintMask &mask,
                                          std::size_t jobs, std::optional<std::size_t> max_parents) {
    if (folds.k < 2) throw TooFewRows("candidate search needs at least two folds");
    if (folds.assignments.size() != data.n_rows()) throw SchemaMismatch("fold plan does not match dataset rows");
    CandidateSearch search;
    const std::size_t n_runs = folds.k * scores.size();
    search.runs.resize(n_runs);
    const std::size_t outcome = data.outcome_index();
    parallel_for(n_runs, jobs, [&](std::size_t i) {
        CandidateRun &run = search.runs[i];
        run.fold = i / scores.size();
        run.score = scores[i % scores.size()].kind;
        try {
            const auto rows = folds.train_rows(run.fold);
            const BinaryDataset train = data.subset(rows);
            GesConfig cfg{scores[i % scores.size()], mask, max_parents, 0};
            const GesResult res = ges(train, cfg);
            run.parents = parents_of(res.graph, outcome).parents;
        } catch (const Error &e) {
            run.error = e.what();
        }
    });
    std::map<NodeSet, std::size_t> seen;
    for (const auto &run : search.runs) {
        if (!run.parents || run.parents->empty()) continue;
        auto [it, inserted] = seen.emplace(*run.parents, search.candidates.size());
        if (inserted) search.candidates.push_back({*run.parents, {}});
        search.candidates[it->second].provenance.emplace_back(run.fold, run.score);
    }
    return search;
}

} // namespace reflcausal
