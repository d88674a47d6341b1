#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "reflcausal/errors.hpp"
#include "reflcausal/icp.hpp"
#include "reflcausal/synthetic.hpp"
#include "test_util.hpp"

using namespace reflcausal;

namespace {

FoldCvll with_mean(double m) {
    FoldCvll c;
    c.per_fold = {m};
    c.mean = m;
    return c;
}

CandidateParentSet cand(NodeSet s) { return {std::move(s), {}}; }

// Outcome Y depends on A and B; C is noise.
PlantedModel two_parent_model(std::uint64_t seed) {
    Pdag dag(4);
    dag.add_directed(0, 3);
    dag.add_directed(1, 3);
    auto m = make_model(testutil::plain_vars(4, true), dag, seed);
    m.cpts[3] = {0.15, 0.55, 0.5, 0.9};
    return m;
}

} // namespace

TEST(Uniqueness, GainArithmetic) {
    struct Row {
        double empty, opt, full, g_empty, g_full;
    };
    const Row rows[] = {{-0.559, -0.434, -0.861, 22.36, 49.59},
                        {-1.044, -0.978, -1.152, 6.32, 15.10},
                        {-1.044, -1.003, -1.141, 3.93, 12.09}};
    for (const auto &r : rows) {
        const auto u = uniqueness_from(with_mean(r.empty), with_mean(r.opt), with_mean(r.full));
        EXPECT_NEAR(u.gain_vs_empty, r.g_empty, 0.01);
        EXPECT_NEAR(u.gain_vs_full, r.g_full, 0.01);
        EXPECT_TRUE(u.passes);
    }
    EXPECT_THROW(cvll_gain(-1.0, 0.0), DomainError);
}

TEST(Uniqueness, FailsWhenOptimumDoesNotBeatBothBaselines) {
    EXPECT_FALSE(uniqueness_from(with_mean(-0.5), with_mean(-0.5), with_mean(-0.9)).passes);
    EXPECT_FALSE(uniqueness_from(with_mean(-0.9), with_mean(-0.6), with_mean(-0.4)).passes);
}

TEST(Stability, EtaFromCitedFStatistics) {
    struct Row {
        double f, eta;
        StabilityStatus status;
    };
    const Row rows[] = {{0.25, .045, StabilityStatus::Stable},   {0.10, .019, StabilityStatus::Stable},
                        {0.13, .024, StabilityStatus::Stable},   {0.34, .060, StabilityStatus::Stable},
                        {0.09, .016, StabilityStatus::Stable},   {0.43, .075, StabilityStatus::Moderate},
                        {0.21, .038, StabilityStatus::Stable}};
    for (const auto &r : rows) {
        const double eta = stats::partial_eta_squared(r.f, 3, 16);
        EXPECT_NEAR(eta, r.eta, 0.001);
        EXPECT_EQ(classify_stability(0.3, 0.3, eta), r.status) << r.f;
    }
}

TEST(Stability, Thresholds) {
    EXPECT_EQ(classify_stability(0.06, 0.5, 0.01), StabilityStatus::Stable);
    EXPECT_EQ(classify_stability(0.05, 0.5, 0.01), StabilityStatus::Unstable);
    EXPECT_EQ(classify_stability(0.5, 0.04, 0.01), StabilityStatus::Unstable);
    EXPECT_EQ(classify_stability(0.5, 0.5, 0.06), StabilityStatus::Moderate);
    EXPECT_EQ(classify_stability(0.5, 0.5, 0.1399), StabilityStatus::Moderate);
    EXPECT_EQ(classify_stability(0.5, 0.5, 0.14), StabilityStatus::Unstable);
}

TEST(Stability, IdenticalEstimatesAreStable) {
    std::vector<std::vector<double>> est(20, {0.3, 0.5});
    const auto r = stability_from_estimates(est, {"k", "b"}, 4);
    for (const auto &p : r.per_parameter) {
        EXPECT_EQ(p.levene.statistic, 0.0);
        EXPECT_EQ(p.anova.statistic, 0.0);
        EXPECT_EQ(p.eta_p_sq, 0.0);
        EXPECT_EQ(p.status, StabilityStatus::Stable);
        EXPECT_DOUBLE_EQ(p.ci95.first, p.ci95.second);
    }
}

TEST(Stability, GroupShiftIsUnstable) {
    std::vector<std::vector<double>> est;
    for (std::size_t f = 0; f < 20; ++f) est.push_back({f < 5 ? 1.0 + 0.01 * f : 0.01 * f});
    const auto r = stability_from_estimates(est, {"k"}, 4);
    EXPECT_EQ(r.per_parameter[0].status, StabilityStatus::Unstable);
}

TEST(Stability, SkippedFoldsAndMinimumPerGroup) {
    std::vector<std::vector<double>> est;
    for (std::size_t f = 0; f < 20; ++f) est.push_back({0.1 * static_cast<double>(f % 3)});
    est[0].clear();
    est[1].clear();
    auto r = stability_from_estimates(est, {"k"}, 4);
    EXPECT_EQ(r.skipped_folds, (std::vector<std::size_t>{0, 1}));
    est[2].clear();
    EXPECT_THROW(stability_from_estimates(est, {"k"}, 4), DegenerateGroup);
    EXPECT_THROW(stability_from_estimates(std::vector<std::vector<double>>(18, {1.0}), {"k"}, 4),
                 IndivisibleGrouping);
}

TEST(Stability, EndToEndOnPlantedData) {
    const auto m = two_parent_model(1);
    const auto d = forward_sample(m, 2000, 0, 1);
    const auto r = stage3_stability(d, {0, 1}, 20, 4, 7);
    ASSERT_EQ(r.per_parameter.size(), 3U);
    EXPECT_EQ(r.per_parameter[0].name, "A@1");
    EXPECT_EQ(r.per_parameter[2].name, "Intercept (b)");
    // Linear probability model of a saturated 2x2 table: slopes recover the
    // main effects approximately.
    EXPECT_NEAR(r.per_parameter[0].mean, 0.38, 0.08);
    EXPECT_NEAR(r.per_parameter[1].mean, 0.33, 0.08);
    for (const auto &p : r.per_parameter) {
        EXPECT_LE(p.ci95.first, p.mean);
        EXPECT_GE(p.ci95.second, p.mean);
    }
    EXPECT_TRUE(r.skipped_folds.empty());
}

TEST(Stability, Errors) {
    const auto d = testutil::random_dataset(30, 3, 2);
    EXPECT_THROW(stage3_stability(d, {}), DomainError);
    EXPECT_THROW(stage3_stability(d, {2}), DomainError);
    EXPECT_THROW(stage3_stability(d, {0, 1}, 20, 4), TooFewRows);
}

TEST(Stability, ConstantParentSkipsEveryFold) {
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < 200; ++i) rows.push_back({0, i % 3 == 0, i % 2});
    const auto d = testutil::from_rows(rows);
    EXPECT_THROW(stage3_stability(d, {0, 1}, 20, 4), DegenerateGroup);
}

TEST(Stage1, SingleCandidateWins) {
    const auto d = testutil::random_dataset(100, 3, 5);
    const auto folds = stratified_kfold(d, 5, 1);
    const auto r = stage1_select(d, folds, {cand({0})});
    EXPECT_EQ(r.winner, 0U);
    EXPECT_EQ(r.per_candidate[0].cvll.per_fold.size(), 5U);
    EXPECT_THROW(stage1_select(d, folds, {}), DomainError);
}

TEST(Stage1, TieGoesToSmallerThenLexicographic) {
    // Duplicated columns give identical CVLL for {A} and {B}.
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < 60; ++i) rows.push_back({i % 2, i % 2, (i % 2) ^ (i % 5 == 0)});
    const auto d = testutil::from_rows(rows);
    const auto folds = stratified_kfold(d, 5, 1);
    auto r = stage1_select(d, folds, {cand({1}), cand({0})});
    ASSERT_EQ(r.per_candidate[0].cvll.mean, r.per_candidate[1].cvll.mean);
    EXPECT_EQ(r.winning_set(), NodeSet{0});
    r = stage1_select(d, folds, {cand({0}), cand({1})});
    EXPECT_EQ(r.winning_set(), NodeSet{0});
}

TEST(Stage1, PlantedSetBeatsSubsetsAndSupersets) {
    std::size_t wins = 0;
    const std::size_t trials = 200;
    for (std::uint64_t s = 0; s < trials; ++s) {
        const auto m = two_parent_model(s);
        const auto d = forward_sample(m, 2000, 0, s);
        const auto folds = stratified_kfold(d, 5, s);
        const auto r = stage1_select(d, folds, {cand({0}), cand({1}), cand({0, 1, 2}), cand({0, 1}), cand({1, 2})});
        wins += r.winning_set() == NodeSet{0, 1};
    }
    EXPECT_GE(static_cast<double>(wins), 0.9 * trials);
}

TEST(Stage2, DegenerateIndependenceIsNotUnique) {
    // Every predictor constant: no parent set can beat the empty one.
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < 200; ++i) rows.push_back({1, 0, i % 3 == 0});
    const auto d = testutil::from_rows(rows);
    const auto folds = stratified_kfold(d, 5, 1);
    const auto u = stage2_uniqueness(d, folds, {0});
    EXPECT_EQ(u.opt.mean, u.empty.mean);
    EXPECT_FALSE(u.passes);
}

TEST(Stage2, IndependentOutcomeUsuallyFails) {
    std::size_t passes = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto d = testutil::random_dataset(1000, 4, s);
        passes += stage2_uniqueness(d, stratified_kfold(d, 5, 1), {0}).passes;
    }
    EXPECT_LT(passes, 50U);
}

TEST(Stage2, PlantedParentsAreUnique) {
    const auto m = two_parent_model(4);
    const auto d = forward_sample(m, 2000, 0, 4);
    const auto folds = stratified_kfold(d, 5, 1);
    const auto u = stage2_uniqueness(d, folds, {0, 1});
    EXPECT_TRUE(u.passes);
    EXPECT_GT(u.gain_vs_empty, 0.0);
    EXPECT_GT(u.gain_vs_full, 0.0);
}

TEST(Pipeline, NoCandidatesMeansEmptyWinner) {
    const auto d = testutil::random_dataset(200, 3, 8);
    const auto r = verify_candidates(d, {}, {});
    EXPECT_TRUE(r.winner.empty());
    EXPECT_FALSE(r.ha_supported);
    EXPECT_FALSE(r.stage1.has_value());
}

TEST(Pipeline, RecoversPlantedParents) {
    const auto m = two_parent_model(2);
    const auto d = forward_sample(m, 2000, 0, 2);
    PipelineConfig cfg;
    cfg.seed = 5;
    const auto r = run_pipeline(d, cfg);
    EXPECT_EQ(r.winner, (NodeSet{0, 1}));
    ASSERT_TRUE(r.stage2.has_value());
    EXPECT_TRUE(r.stage2->passes);
    ASSERT_TRUE(r.stage3.has_value());
    EXPECT_EQ(r.search.runs.size(), 20U);
}

TEST(Pipeline, InvariantToCandidateOrderAndRowOrder) {
    const auto m = two_parent_model(3);
    const auto d = forward_sample(m, 1000, 0, 3);
    const std::vector<CandidateParentSet> cands{cand({0}), cand({0, 1}), cand({1, 2})};
    const PipelineConfig cfg;
    const auto a = verify_candidates(d, cands, cfg);
    const auto b = verify_candidates(d, {cands[2], cands[0], cands[1]}, cfg);
    EXPECT_EQ(a.winner, b.winner);
    EXPECT_EQ(a.ha_supported, b.ha_supported);

    std::vector<std::size_t> perm(d.n_rows());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = perm.size() - 1 - i;
    Rng rng(9);
    shuffle(perm, rng);
    const auto c = verify_candidates(d.subset(perm), cands, cfg);
    EXPECT_EQ(a.winner, c.winner);
    EXPECT_EQ(a.ha_supported, c.ha_supported);
    EXPECT_NEAR(a.stage2->opt.mean, c.stage2->opt.mean, 1e-12);
    ASSERT_TRUE(a.stage3 && c.stage3);
    for (std::size_t p = 0; p < a.stage3->per_parameter.size(); ++p) {
        EXPECT_EQ(a.stage3->per_parameter[p].status, c.stage3->per_parameter[p].status);
        EXPECT_NEAR(a.stage3->per_parameter[p].mean, c.stage3->per_parameter[p].mean, 1e-12);
    }
}

TEST(Pipeline, ReportJsonIsReproducible) {
    const auto m = two_parent_model(6);
    const auto d = forward_sample(m, 800, 0, 6);
    PipelineConfig cfg;
    cfg.seed = 11;
    const auto a = to_json(run_pipeline(d, cfg), d).dump(2);
    cfg.jobs = 2;
    const auto b = to_json(run_pipeline(d, cfg), d).dump(2);
    EXPECT_EQ(a, b);
}

TEST(Render, TablesMentionEveryRow) {
    const auto m = two_parent_model(7);
    const auto d = forward_sample(m, 800, 0, 7);
    const auto r = verify_candidates(d, {cand({0}), cand({0, 1})}, {});
    const auto t1 = render_cvll_table(*r.stage1, d);
    EXPECT_NE(t1.find("{A@1, B@1}"), std::string::npos);
    EXPECT_NE(render_uniqueness_table(*r.stage2).find("gain vs empty"), std::string::npos);
    EXPECT_NE(render_stability_table(*r.stage3).find("Intercept (b)"), std::string::npos);
}
