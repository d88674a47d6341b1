#include "reflcausal/icp.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "reflcausal/errors.hpp"
#include "reflcausal/parallel.hpp"
#include "reflcausal/rng.hpp"
#include "reflcausal/scoring.hpp"
#include "reflcausal/special_functions.hpp"

namespace reflcausal {

namespace {

// True when a should win over b.
bool better(const CvllEntry &a, const CvllEntry &b) {
    if (a.cvll.mean != b.cvll.mean) return a.cvll.mean > b.cvll.mean;
    if (a.candidate.members.size() != b.candidate.members.size()) {
        return a.candidate.members.size() < b.candidate.members.size();
    }
    return a.candidate.members < b.candidate.members;
}

NodeSet all_but_outcome(const BinaryDataset &data) {
    NodeSet out;
    for (std::size_t c = 0; c < data.n_cols(); ++c) {
        if (c != data.outcome_index()) out.push_back(c);
    }
    return out;
}

std::string set_label(const NodeSet &s, const BinaryDataset &data) {
    std::string out = "{";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += data.variable(s[i]).label();
    }
    return out + "}";
}

std::string fmt_p(double p) { return p < 0.001 ? "<.001" : fmt::format("{:.3f}", p); }

} // namespace

FoldCvll fold_cvll(const BinaryDataset &data, const FoldPlan &folds, const NodeSet &parents, double alpha) {
    if (folds.assignments.size() != data.n_rows()) throw SchemaMismatch("fold plan does not match the dataset");
    FoldCvll out;
    for (std::size_t f = 0; f < folds.k; ++f) {
        const auto train = data.subset(folds.train_rows(f));
        const auto test = data.subset(folds.test_rows(f));
        out.per_fold.push_back(cvll(train, test, data.outcome_index(), parents, alpha));
    }
    out.mean = stats::mean(out.per_fold);
    out.std = stats::sample_std(out.per_fold);
    return out;
}

CvllReport stage1_select(const BinaryDataset &data, const FoldPlan &folds,
                         const std::vector<CandidateParentSet> &candidates, double alpha, std::size_t jobs) {
    if (candidates.empty()) throw DomainError("stage 1 needs at least one candidate");
    CvllReport r;
    r.per_candidate.resize(candidates.size());
    parallel_for(candidates.size(), jobs, [&](std::size_t i) {
        r.per_candidate[i] = {candidates[i], fold_cvll(data, folds, candidates[i].members, alpha)};
    });
    for (std::size_t i = 1; i < r.per_candidate.size(); ++i) {
        if (better(r.per_candidate[i], r.per_candidate[r.winner])) r.winner = i;
    }
    return r;
}

double cvll_gain(double opt, double base) {
    if (base == 0.0) throw DomainError("gain is undefined against a zero baseline");
    return (opt - base) / std::fabs(base) * 100.0;
}

UniquenessReport uniqueness_from(FoldCvll empty, FoldCvll opt, FoldCvll full) {
    UniquenessReport r;
    r.empty = std::move(empty);
    r.opt = std::move(opt);
    r.full = std::move(full);
    r.gain_vs_empty = cvll_gain(r.opt.mean, r.empty.mean);
    r.gain_vs_full = cvll_gain(r.opt.mean, r.full.mean);
    r.passes = r.opt.mean > r.empty.mean && r.opt.mean > r.full.mean;
    return r;
}

UniquenessReport stage2_uniqueness(const BinaryDataset &data, const FoldPlan &folds, const NodeSet &winner,
                                   double alpha) {
    return uniqueness_from(fold_cvll(data, folds, {}, alpha), fold_cvll(data, folds, winner, alpha),
                           fold_cvll(data, folds, all_but_outcome(data), alpha));
}

const char *to_string(StabilityStatus s) {
    switch (s) {
    case StabilityStatus::Stable:
        return "Stable";
    case StabilityStatus::Moderate:
        return "Moderate";
    case StabilityStatus::Unstable:
        return "Unstable";
    }
    return "?";
}

StabilityStatus classify_stability(double levene_p, double anova_p, double eta_p_sq) {
    if (!(levene_p > kStabilityAlpha && anova_p > kStabilityAlpha)) return StabilityStatus::Unstable;
    if (eta_p_sq < kSmallEffect) return StabilityStatus::Stable;
    if (eta_p_sq < kMediumEffect) return StabilityStatus::Moderate;
    return StabilityStatus::Unstable;
}

bool StabilityReport::all_stable_or_moderate() const {
    return std::all_of(per_parameter.begin(), per_parameter.end(),
                       [](const auto &p) { return p.status != StabilityStatus::Unstable; });
}

bool StabilityReport::any_moderate() const {
    return std::any_of(per_parameter.begin(), per_parameter.end(),
                       [](const auto &p) { return p.status == StabilityStatus::Moderate; });
}

StabilityReport stability_from_estimates(std::vector<std::vector<double>> estimates, std::vector<std::string> names,
                                         std::size_t n_groups) {
    const std::size_t n_folds = estimates.size();
    if (n_groups < 2) throw DomainError("stability needs at least two groups");
    if (n_folds == 0 || n_folds % n_groups != 0) {
        throw IndivisibleGrouping(fmt::format("{} folds cannot form {} equal groups", n_folds, n_groups));
    }
    const std::size_t per_group = n_folds / n_groups;
    StabilityReport r;
    r.n_folds = n_folds;
    r.n_groups = n_groups;
    for (std::size_t f = 0; f < n_folds; ++f) {
        if (estimates[f].empty()) {
            r.skipped_folds.push_back(f);
        } else if (estimates[f].size() != names.size()) {
            throw DomainError("estimate row has the wrong number of parameters");
        }
    }
    for (std::size_t g = 0; g < n_groups; ++g) {
        std::size_t usable = 0;
        for (std::size_t f = g * per_group; f < (g + 1) * per_group; ++f) usable += !estimates[f].empty();
        if (usable < 3) {
            throw DegenerateGroup(fmt::format("group {} has {} usable folds; at least 3 are required", g, usable));
        }
    }
    for (std::size_t p = 0; p < names.size(); ++p) {
        stats::Groups groups(n_groups);
        std::vector<double> all;
        for (std::size_t f = 0; f < n_folds; ++f) {
            if (estimates[f].empty()) continue;
            groups[f / per_group].push_back(estimates[f][p]);
            all.push_back(estimates[f][p]);
        }
        ParameterStability ps;
        ps.name = names[p];
        ps.mean = stats::mean(all);
        const double m = static_cast<double>(all.size());
        const double half = special::t_quantile(0.975, m - 1.0) * stats::sample_std(all) / std::sqrt(m);
        ps.ci95 = {ps.mean - half, ps.mean + half};
        ps.levene = stats::levene(groups);
        ps.anova = stats::anova_oneway(groups);
        ps.eta_p_sq = stats::partial_eta_squared(ps.anova.statistic, ps.anova.df1, *ps.anova.df2);
        ps.status = classify_stability(ps.levene.p_value, ps.anova.p_value, ps.eta_p_sq);
        r.per_parameter.push_back(std::move(ps));
    }
    r.estimates = std::move(estimates);
    return r;
}

StabilityReport stage3_stability(const BinaryDataset &data, const NodeSet &winner, std::size_t n_folds,
                                 std::size_t n_groups, std::uint64_t seed, std::size_t jobs) {
    if (winner.empty()) throw DomainError("stability needs a nonempty parent set");
    if (contains_node(winner, data.outcome_index())) throw DomainError("parent set contains the outcome");
    const FoldPlan plan = stratified_kfold(data, n_folds, seed);
    group_folds(plan, n_groups); // validates divisibility
    const auto folds = plan.folds();
    for (std::size_t f = 0; f < folds.size(); ++f) {
        if (folds[f].size() < winner.size() + 2) {
            throw TooFewRows(fmt::format("fold {} has {} rows; at least {} are required", f, folds[f].size(),
                                         winner.size() + 2));
        }
    }

    std::vector<std::vector<double>> estimates(n_folds);
    const auto y_col = data.column(data.outcome_index());
    parallel_for(n_folds, jobs, [&](std::size_t f) {
        std::vector<double> y;
        std::vector<std::vector<double>> x;
        for (auto row : folds[f]) {
            y.push_back(y_col[row]);
            std::vector<double> xr;
            for (auto c : winner) xr.push_back(data.column(c)[row]);
            x.push_back(std::move(xr));
        }
        try {
            const auto fit = stats::ols(y, x);
            estimates[f] = fit.coefficients;
            estimates[f].push_back(fit.intercept);
        } catch (const RankDeficient &) {
            estimates[f].clear();
        }
    });

    std::vector<std::string> names;
    for (auto c : winner) names.push_back(data.variable(c).label());
    names.emplace_back("Intercept (b)");
    auto r = stability_from_estimates(std::move(estimates), std::move(names), n_groups);
    for (auto f : r.skipped_folds) r.warnings.push_back(SingularDesign(f).what());
    return r;
}

PipelineResult verify_candidates(const BinaryDataset &data, std::vector<CandidateParentSet> candidates,
                                 const PipelineConfig &cfg) {
    PipelineResult out;
    if (candidates.empty()) {
        out.warnings.emplace_back("no candidate parent set was proposed; the winner is the empty set");
        return out;
    }
    const FoldPlan folds = stratified_kfold(data, cfg.k, cfg.seed);
    out.stage1 = stage1_select(data, folds, candidates, cfg.alpha, cfg.jobs);
    out.winner = out.stage1->winning_set();
    out.stage2 = stage2_uniqueness(data, folds, out.winner, cfg.alpha);
    try {
        out.stage3 = stage3_stability(data, out.winner, cfg.stability_folds, cfg.stability_groups,
                                      derive_seed(cfg.seed, 3), cfg.jobs);
    } catch (const DegenerateGroup &e) {
        out.warnings.emplace_back(e.what());
    }
    if (out.stage3) {
        for (const auto &w : out.stage3->warnings) out.warnings.push_back(w);
        out.moderate_flagged = out.stage3->any_moderate();
    }
    out.ha_supported = out.stage2->passes && out.stage3 && out.stage3->all_stable_or_moderate();
    return out;
}

PipelineResult run_pipeline(const BinaryDataset &data, const PipelineConfig &cfg) {
    const FoldPlan folds = stratified_kfold(data, cfg.k, cfg.seed);
    auto search =
        outcome_parent_candidates(data, folds, cfg.scores, temporal_mask(data.variables()), cfg.jobs, cfg.max_parents);
    auto out = verify_candidates(data, search.candidates, cfg);
    for (const auto &run : search.runs) {
        if (!run.parents) {
            out.warnings.push_back(fmt::format("discovery run fold {} score {} failed: {}", run.fold,
                                               to_string(run.score), run.error));
        }
    }
    out.search = std::move(search);
    return out;
}

nlohmann::json to_json(const FoldCvll &c) {
    return {{"per_fold", c.per_fold}, {"mean", c.mean}, {"std", c.std}};
}

nlohmann::json to_json(const CvllReport &r, const BinaryDataset &data) {
    using nlohmann::json;
    json rows = json::array();
    for (const auto &e : r.per_candidate) {
        json prov = json::array();
        for (const auto &[fold, kind] : e.candidate.provenance) prov.push_back({{"fold", fold}, {"score", to_string(kind)}});
        rows.push_back({{"members", e.candidate.labels(data)}, {"provenance", prov}, {"cvll", to_json(e.cvll)}});
    }
    return {{"per_candidate", rows}, {"winner", r.per_candidate.at(r.winner).candidate.labels(data)}};
}

nlohmann::json to_json(const UniquenessReport &r) {
    return {{"cvll_empty", to_json(r.empty)}, {"cvll_opt", to_json(r.opt)},   {"cvll_full", to_json(r.full)},
            {"gain_vs_empty", r.gain_vs_empty}, {"gain_vs_full", r.gain_vs_full}, {"passes", r.passes}};
}

namespace {

nlohmann::json test_json(const stats::TestResult &t) {
    nlohmann::json j = {{"F", t.statistic}, {"df1", t.df1}, {"p", t.p_value}};
    j["df2"] = t.df2 ? nlohmann::json(*t.df2) : nlohmann::json(nullptr);
    return j;
}

} // namespace

nlohmann::json to_json(const StabilityReport &r) {
    using nlohmann::json;
    json params = json::array();
    for (const auto &p : r.per_parameter) {
        params.push_back({{"name", p.name},
                          {"mean", p.mean},
                          {"ci95", {p.ci95.first, p.ci95.second}},
                          {"levene", test_json(p.levene)},
                          {"anova", test_json(p.anova)},
                          {"eta_p_sq", p.eta_p_sq},
                          {"status", to_string(p.status)}});
    }
    return {{"n_folds", r.n_folds},   {"n_groups", r.n_groups},           {"per_parameter", params},
            {"estimates", r.estimates}, {"skipped_folds", r.skipped_folds}, {"warnings", r.warnings}};
}

nlohmann::json to_json(const PipelineResult &r, const BinaryDataset &data) {
    using nlohmann::json;
    json runs = json::array();
    for (const auto &run : r.search.runs) {
        json j = {{"fold", run.fold}, {"score", to_string(run.score)}};
        if (run.parents) {
            std::vector<std::string> labels;
            for (auto p : *run.parents) labels.push_back(data.variable(p).label());
            j["parents"] = labels;
        } else {
            j["error"] = run.error;
        }
        runs.push_back(j);
    }
    std::vector<std::string> winner;
    for (auto w : r.winner) winner.push_back(data.variable(w).label());
    return {{"discovery_runs", runs},
            {"stage1", r.stage1 ? to_json(*r.stage1, data) : json(nullptr)},
            {"stage2", r.stage2 ? to_json(*r.stage2) : json(nullptr)},
            {"stage3", r.stage3 ? to_json(*r.stage3) : json(nullptr)},
            {"winner", winner},
            {"ha_supported", r.ha_supported},
            {"moderate_flagged", r.moderate_flagged},
            {"warnings", r.warnings}};
}

std::string render_cvll_table(const CvllReport &r, const BinaryDataset &data) {
    std::size_t width = 13;
    for (const auto &e : r.per_candidate) width = std::max(width, set_label(e.candidate.members, data).size());
    std::string out = fmt::format("{:<{}}  {:>18}\n", "Candidate set", width, "CVLL (mean ± std)");
    for (std::size_t i = 0; i < r.per_candidate.size(); ++i) {
        const auto &e = r.per_candidate[i];
        out += fmt::format("{:<{}}  {:>8.3f} ± {:<7.3f}{}\n", set_label(e.candidate.members, data), width,
                           e.cvll.mean, e.cvll.std, i == r.winner ? "  *" : "");
    }
    return out;
}

std::string render_uniqueness_table(const UniquenessReport &r) {
    std::string out = fmt::format("{:<10}  {:>18}\n", "Set", "CVLL (mean ± std)");
    out += fmt::format("{:<10}  {:>8.3f} ± {:<7.3f}\n", "empty", r.empty.mean, r.empty.std);
    out += fmt::format("{:<10}  {:>8.3f} ± {:<7.3f}\n", "optimal", r.opt.mean, r.opt.std);
    out += fmt::format("{:<10}  {:>8.3f} ± {:<7.3f}\n", "full", r.full.mean, r.full.std);
    out += fmt::format("gain vs empty: {:.2f}%\ngain vs full: {:.2f}%\nunique: {}\n", r.gain_vs_empty,
                       r.gain_vs_full, r.passes ? "yes" : "no");
    return out;
}

std::string render_stability_table(const StabilityReport &r) {
    std::size_t width = 9;
    for (const auto &p : r.per_parameter) width = std::max(width, p.name.size());
    std::string out = fmt::format("{:<{}}  {:>8}  {:>20}  {:>24}  {:>24}  {:>6}  {}\n", "Parameter", width, "Mean",
                                  "95% CI", "Levene", "ANOVA", "eta_p2", "Status");
    auto test = [](const stats::TestResult &t) {
        return fmt::format("F({:g}, {:g}) = {:.2f}, p = {}", t.df1, t.df2.value_or(0.0), t.statistic,
                           fmt_p(t.p_value));
    };
    for (const auto &p : r.per_parameter) {
        out += fmt::format("{:<{}}  {:>8.3f}  {:>20}  {:>24}  {:>24}  {:>6.3f}  {}\n", p.name, width, p.mean,
                           fmt::format("[{:.3f}, {:.3f}]", p.ci95.first, p.ci95.second), test(p.levene),
                           test(p.anova), p.eta_p_sq, to_string(p.status));
    }
    return out;
}

} // namespace reflcausal
