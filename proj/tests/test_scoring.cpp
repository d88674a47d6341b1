#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "reflcausal/errors.hpp"
#include "reflcausal/graph.hpp"
#include "reflcausal/scoring.hpp"
#include "reflcausal/special_functions.hpp"
#include "score_fixtures.hpp"
#include "test_util.hpp"

using namespace reflcausal;

namespace {

BinaryDataset fixture_data(std::size_t i) { return testutil::from_rows(score_fixtures::kData[i]); }

BinaryDataset rows_of(const BinaryDataset &d, std::size_t from, std::size_t to) {
    std::vector<std::size_t> idx;
    for (std::size_t r = from; r < to; ++r) idx.push_back(r);
    return d.subset(idx);
}

bool full_support(const BinaryDataset &d, const Pdag &dag) {
    for (std::size_t v = 0; v < dag.n_vars(); ++v) {
        const NodeSet pa = dag.parents(v);
        if (count_table(d, v, pa).n_configs() != (std::size_t{1} << pa.size())) return false;
    }
    return true;
}

} // namespace

TEST(LocalScore, MatchesLogGammaOracle) {
    for (const auto &c : score_fixtures::kLocal) {
        const auto d = fixture_data(c.data);
        const NodeSet pa(c.parents.begin(), c.parents.end());
        EXPECT_NEAR(local_score(d, c.v, pa, {ScoreKind::BDs, c.alpha}), c.bds, 1e-9);
        EXPECT_NEAR(local_score(d, c.v, pa, {ScoreKind::BDeu, c.alpha}), c.bdeu, 1e-9);
        EXPECT_NEAR(local_score(d, c.v, pa, {ScoreKind::K2, c.alpha}), c.k2, 1e-9);
        EXPECT_NEAR(local_score(d, c.v, pa, {ScoreKind::BIC, c.alpha}), c.bic, 1e-9);
    }
}

TEST(LocalScore, EmptyParentsHandValue) {
    const auto d = fixture_data(0);
    using special::log_gamma;
    const double expected = log_gamma(1.0) - log_gamma(9.0) + 2.0 * (log_gamma(4.5) - log_gamma(0.5));
    EXPECT_NEAR(local_score(d, 0, {}, {ScoreKind::BDs, 1.0}), expected, 1e-12);
}

TEST(LocalScore, BdsEqualsBdeuWhenAllConfigsObserved) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto d = testutil::random_dataset(200, 5, seed);
        for (const NodeSet &pa : {NodeSet{}, NodeSet{1}, NodeSet{0, 2}, NodeSet{1, 2, 3}}) {
            ASSERT_EQ(count_table(d, 4, pa).n_configs(), std::size_t{1} << pa.size());
            for (double alpha : {1.0, 5.0, 10.0}) {
                EXPECT_EQ(local_score(d, 4, pa, {ScoreKind::BDs, alpha}),
                          local_score(d, 4, pa, {ScoreKind::BDeu, alpha}));
            }
        }
    }
}

TEST(LocalScore, BdsPriorMassPerObservedConfig) {
    // With zero counts removed, the prior of each observed configuration is
    // alpha / q~: check via a dataset where only 3 of 8 configurations occur.
    const auto d = testutil::from_rows({{0, 0, 0, 1}, {1, 1, 0, 0}, {1, 1, 1, 1}, {0, 0, 0, 0}});
    const auto table = count_table(d, 3, {0, 1, 2});
    ASSERT_EQ(table.n_configs(), 3U);
    const double alpha = 3.0;
    const double a = alpha / 3.0;
    using special::log_gamma;
    double expected = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        const double nj = table.n0[j] + table.n1[j];
        expected += log_gamma(a) - log_gamma(a + nj) + log_gamma(a / 2 + table.n0[j]) - log_gamma(a / 2) +
                    log_gamma(a / 2 + table.n1[j]) - log_gamma(a / 2);
    }
    EXPECT_NEAR(local_score(d, 3, {0, 1, 2}, {ScoreKind::BDs, alpha}), expected, 1e-12);
}

TEST(LocalScore, Errors) {
    const auto d = fixture_data(1);
    EXPECT_THROW(local_score(d, 1, {1}, {}), DomainError);
    EXPECT_THROW(local_score(d.subset(std::vector<std::size_t>{}), 0, {}, {}), EmptyData);
    EXPECT_THROW(local_score(d, 0, {}, {ScoreKind::BDeu, 0.0}), DomainError);
    EXPECT_EQ(parse_score_kind("bdeu"), ScoreKind::BDeu);
    EXPECT_THROW(parse_score_kind("aic"), ValidationError);
}

TEST(TotalScore, EmptyGraphAndSingleEdgeDecompose) {
    const auto d = testutil::random_dataset(150, 4, 9);
    const ScoreFn fn{ScoreKind::BDs, 1.0};
    double sum = 0.0;
    for (std::size_t v = 0; v < 4; ++v) sum += local_score(d, v, {}, fn);
    EXPECT_NEAR(total_score(d, Pdag(4), fn), sum, 1e-12);
    Pdag g(4);
    g.add_directed(1, 3);
    EXPECT_NEAR(total_score(d, g, fn) - total_score(d, Pdag(4), fn),
                local_score(d, 3, {1}, fn) - local_score(d, 3, {}, fn), 1e-10);
}

// Markov-equivalent DAGs must score the same under BDeu, BIC and (on
// datasets where every parent configuration is observed) BDs.
class ScoreEquivalence : public ::testing::TestWithParam<std::size_t> {};

TEST_P(ScoreEquivalence, ExhaustiveOverMarkovEquivalentPairs) {
    const std::size_t n = GetParam();
    const auto d = testutil::random_dataset(400, n, 77 + n);
    std::map<std::string, std::vector<Pdag>> classes;
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels.emplace_back(1, static_cast<char>('A' + i));
    for (const auto &dag : testutil::all_dags(n)) classes[serialize(cpdag_of_dag(dag), labels)].push_back(dag);
    std::size_t pairs = 0;
    for (const auto &[k, members] : classes) {
        for (const auto kind : {ScoreKind::BDeu, ScoreKind::BIC, ScoreKind::BDs}) {
            const ScoreFn fn{kind, 1.0};
            const double ref = total_score(d, members.front(), fn);
            for (const auto &m : members) {
                if (kind == ScoreKind::BDs) ASSERT_TRUE(full_support(d, m));
                EXPECT_NEAR(total_score(d, m, fn), ref, 1e-9 * std::fabs(ref)) << to_string(kind) << " " << k;
                ++pairs;
            }
        }
    }
    EXPECT_GT(pairs, 0U);
}

INSTANTIATE_TEST_SUITE_P(UpToFourVariables, ScoreEquivalence, ::testing::Values(2, 3, 4));

TEST(ScoreEquivalence, BdsBreaksWhenConfigurationsAreMissing) {
    // A is constant, so A -> B sees one parent configuration while B -> A
    // sees two: BDs differs across the two orientations, BDeu does not.
    const auto d = testutil::from_rows({{0, 0}, {0, 1}, {0, 1}, {0, 0}, {0, 1}});
    Pdag ab(2), ba(2);
    ab.add_directed(0, 1);
    ba.add_directed(1, 0);
    const ScoreFn bds{ScoreKind::BDs, 1.0}, bdeu{ScoreKind::BDeu, 1.0};
    EXPECT_GT(std::fabs(total_score(d, ab, bds) - total_score(d, ba, bds)), 1e-3);
    EXPECT_NEAR(total_score(d, ab, bdeu), total_score(d, ba, bdeu), 1e-12);
}

TEST(ScoreEquivalence, K2IsNotScoreEquivalent) {
    const auto d = testutil::random_dataset(60, 2, 3, 0.3);
    Pdag ab(2), ba(2);
    ab.add_directed(0, 1);
    ba.add_directed(1, 0);
    const ScoreFn k2{ScoreKind::K2, 1.0};
    EXPECT_NE(total_score(d, ab, k2), total_score(d, ba, k2));
}

TEST(Cvll, MatchesOracle) {
    for (const auto &c : score_fixtures::kCvll) {
        const auto d = fixture_data(c.data);
        const NodeSet pa(c.parents.begin(), c.parents.end());
        EXPECT_NEAR(cvll(rows_of(d, 0, c.train_rows), rows_of(d, c.train_rows, d.n_rows()), c.v, pa, c.alpha),
                    c.cvll, 1e-12);
    }
}

TEST(Cvll, UniformOutcomeGivesLogHalf) {
    const auto train = testutil::from_rows({{0, 1}, {1, 0}, {0, 0}, {1, 1}});
    const auto test = testutil::from_rows({{0, 1}, {1, 1}, {1, 0}});
    EXPECT_NEAR(cvll(train, test, 1, {}), std::log(0.5), 1e-15);
}

TEST(Cvll, PerfectPredictorApproachesZero) {
    std::vector<std::vector<int>> rows;
    for (int i = 0; i < 4000; ++i) rows.push_back({i % 2, i % 2});
    const auto d = testutil::from_rows(rows);
    const double v = cvll(rows_of(d, 0, 3000), rows_of(d, 3000, 4000), 1, {0});
    EXPECT_LT(v, 0.0);
    EXPECT_GT(v, -1e-3);
}

TEST(Cvll, UnseenConfigurationFallsBackToMarginal) {
    const auto train = testutil::from_rows({{0, 1}, {0, 1}, {0, 0}});
    const auto test = testutil::from_rows({{1, 1}});
    EXPECT_NEAR(cvll(train, test, 1, {0}, 1.0), std::log((2.0 + 0.5) / (3.0 + 1.0)), 1e-15);
}

TEST(Cvll, RowOrderInvariant) {
    const auto d = testutil::random_dataset(90, 4, 12);
    const auto train = rows_of(d, 0, 60), test = rows_of(d, 60, 90);
    std::vector<std::size_t> rev;
    for (std::size_t i = 30; i-- > 0;) rev.push_back(i);
    EXPECT_EQ(cvll(train, test, 3, {0, 2}), cvll(train, test.subset(rev), 3, {0, 2}));
}

TEST(Cvll, SchemaMismatch) {
    const auto a = testutil::random_dataset(10, 3, 1);
    const auto b = testutil::random_dataset(10, 4, 1);
    EXPECT_THROW(cvll(a, b, 2, {}), SchemaMismatch);
}

TEST(ScoreCache, MatchesDirectEvaluation) {
    const auto d = testutil::random_dataset(100, 4, 2);
    ScoreCache cache(d, {ScoreKind::BIC, 1.0});
    EXPECT_EQ(cache.local(2, {0, 1}), local_score(d, 2, {0, 1}, {ScoreKind::BIC, 1.0}));
    EXPECT_EQ(cache.local(2, {0, 1}), cache.local(2, {0, 1}));
    EXPECT_EQ(cache.size(), 1U);
}

TEST(ScoreTrace, ListsEveryVariable) {
    const auto d = testutil::random_dataset(50, 3, 2);
    Pdag g(3);
    g.add_directed(0, 2);
    const auto text = score_trace(d, g, {});
    EXPECT_NE(text.find("BDs C@1 | {A@1}"), std::string::npos);
    EXPECT_NE(text.find("total = "), std::string::npos);
}
