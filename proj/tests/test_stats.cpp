#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "reflcausal/errors.hpp"
#include "reflcausal/special_functions.hpp"
#include "reflcausal/stats.hpp"
#include "stats_fixtures.hpp"

using namespace reflcausal;

namespace {

::testing::AssertionResult close(double actual, double expected, double tol) {
    const double scale = std::max(1.0, std::fabs(expected));
    if (std::fabs(actual - expected) <= tol * scale) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "actual " << actual << " expected " << expected << " diff "
                                         << actual - expected;
}

std::vector<std::vector<std::uint8_t>> to_blocks(const std::vector<std::vector<int>> &m) {
    std::vector<std::vector<std::uint8_t>> out;
    for (const auto &row : m) out.emplace_back(row.begin(), row.end());
    return out;
}

} // namespace

TEST(SpecialFunctions, LogGammaMatchesOracle) {
    for (const auto &c : fixtures::kLogGamma) {
        EXPECT_TRUE(close(special::log_gamma(c.x), c.expected, 1e-12)) << "x=" << c.x;
    }
}

TEST(SpecialFunctions, LogGammaDomain) {
    EXPECT_THROW(special::log_gamma(0.0), DomainError);
    EXPECT_THROW(special::log_gamma(-2.5), DomainError);
    EXPECT_DOUBLE_EQ(special::log_gamma(1.0), 0.0);
    EXPECT_NEAR(special::log_gamma(9.0), std::log(40320.0), 1e-12);
}

TEST(SpecialFunctions, IncompleteBetaMatchesOracle) {
    for (const auto &c : fixtures::kIncBeta) {
        EXPECT_TRUE(close(special::inc_beta(c.a, c.b, c.x), c.value, 1e-9)) << c.a << " " << c.b << " " << c.x;
    }
}

TEST(SpecialFunctions, IncompleteGammaMatchesOracle) {
    for (const auto &c : fixtures::kIncGamma) {
        EXPECT_TRUE(close(special::inc_gamma_p(c.a, c.x), c.p, 1e-9));
        EXPECT_TRUE(close(special::inc_gamma_q(c.a, c.x), c.q, 1e-9));
    }
}

TEST(SpecialFunctions, FSurvivalMatchesOracle) {
    for (const auto &c : fixtures::kFSf) {
        EXPECT_TRUE(close(special::f_sf(c.f, c.d1, c.d2), c.sf, 1e-9)) << "F=" << c.f;
    }
    EXPECT_EQ(special::f_sf(0.0, 3, 16), 1.0);
}

TEST(SpecialFunctions, ChiSquareSurvivalMatchesOracle) {
    for (const auto &c : fixtures::kChi2Sf) {
        EXPECT_TRUE(close(special::chi2_sf(c.x, c.df), c.sf, 1e-9)) << "x=" << c.x;
    }
    EXPECT_EQ(special::chi2_sf(0.0, 3), 1.0);
}

TEST(SpecialFunctions, SurvivalFunctionsAreMonotoneAndBounded) {
    double prev_f = 1.0, prev_c = 1.0;
    for (double x = 0.0; x < 30.0; x += 0.37) {
        const double f = special::f_sf(x, 3, 16);
        const double c = special::chi2_sf(x, 3);
        EXPECT_LE(f, prev_f);
        EXPECT_LE(c, prev_c);
        EXPECT_GE(f, 0.0);
        EXPECT_GE(c, 0.0);
        prev_f = f;
        prev_c = c;
    }
}

TEST(SpecialFunctions, TQuantileInvertsTail) {
    for (double df : {1.0, 3.0, 10.0, 57.0}) {
        const double q = special::t_quantile(0.975, df);
        EXPECT_NEAR(special::t_two_sided_p(q, df), 0.05, 1e-10);
    }
    EXPECT_NEAR(special::t_quantile(0.975, 16), 2.119905299221, 1e-9);
}

TEST(Levene, MatchesOracle) {
    for (const auto &c : fixtures::kLevene) {
        const auto r = stats::levene(c.groups);
        EXPECT_TRUE(close(r.statistic, c.statistic, 1e-9));
        EXPECT_TRUE(close(r.p_value, c.p, 1e-9));
    }
}

TEST(Levene, FourGroupsOfFiveHaveDf3And16) {
    const auto r = stats::levene(fixtures::kLevene[0].groups);
    EXPECT_EQ(r.df1, 3.0);
    EXPECT_EQ(*r.df2, 16.0);
}

TEST(Levene, IdenticalGroupsGiveZero) {
    const auto r = stats::levene({{1, 2, 3}, {1, 2, 3}});
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
}

TEST(Levene, DegenerateGroups) {
    EXPECT_THROW(stats::levene({{1, 2, 3}}), DegenerateGroup);
    EXPECT_THROW(stats::levene({{1, 2, 3}, {4}}), DegenerateGroup);
}

TEST(Anova, MatchesOracle) {
    for (const auto &c : fixtures::kAnova) {
        const auto r = stats::anova_oneway(c.groups);
        EXPECT_TRUE(close(r.statistic, c.statistic, 1e-9));
        EXPECT_TRUE(close(r.p_value, c.p, 1e-9));
        EXPECT_TRUE(close(*r.effect_size, c.eta, 1e-9));
    }
}

TEST(Anova, EqualMeansUnequalSpread) {
    const auto r = stats::anova_oneway({{1, 3}, {0, 4}, {-8, 12}});
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
    EXPECT_EQ(*r.effect_size, 0.0);
}

TEST(Anova, ShiftAndScaleInvariance) {
    const auto &g = fixtures::kAnova[2].groups;
    auto shifted = g;
    auto scaled = g;
    for (auto &grp : shifted)
        for (auto &v : grp) v += 17.25;
    for (auto &grp : scaled)
        for (auto &v : grp) v *= 3.5;
    const double f = stats::anova_oneway(g).statistic;
    EXPECT_NEAR(stats::anova_oneway(shifted).statistic, f, 1e-8 * f);
    EXPECT_NEAR(stats::anova_oneway(scaled).statistic, f, 1e-8 * f);
    const double w = stats::levene(g).statistic;
    EXPECT_NEAR(stats::levene(shifted).statistic, w, 1e-8 * w);
}

TEST(Anova, EtaSquaredFromF) {
    EXPECT_NEAR(stats::partial_eta_squared(0.25, 3, 16), 0.75 / 16.75, 1e-15);
    EXPECT_NEAR(stats::partial_eta_squared(0.43, 3, 16), 0.0746, 1e-3);
    EXPECT_THROW(stats::partial_eta_squared(-1, 3, 16), DomainError);
    const auto r = stats::anova_oneway(fixtures::kAnova[3].groups);
    EXPECT_NEAR(stats::partial_eta_squared(r.statistic, r.df1, *r.df2), *r.effect_size, 1e-12);
}

TEST(CochranQ, MatchesOracle) {
    for (const auto &c : fixtures::kCochran) {
        const auto blocks = to_blocks(c.blocks);
        const auto r = stats::cochran_q(blocks);
        EXPECT_TRUE(close(r.statistic, c.q, 1e-9));
        EXPECT_TRUE(close(r.p_value, c.p, 1e-9));
        const double k = static_cast<double>(blocks.front().size());
        EXPECT_NEAR(*r.effect_size, c.q / (static_cast<double>(blocks.size()) * (k - 1)), 1e-12);
    }
}

TEST(CochranQ, IdenticalColumnsGiveZero) {
    const auto r = stats::cochran_q({{1, 1, 1}, {0, 0, 0}, {1, 1, 1}, {0, 0, 0}, {1, 1, 1}});
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_EQ(r.p_value, 1.0);
}

TEST(CochranQ, InvariantUnderRelabelling) {
    for (const auto &c : fixtures::kCochran) {
        auto blocks = to_blocks(c.blocks);
        const double q = stats::cochran_q(blocks).statistic;
        for (auto &row : blocks)
            for (auto &v : row) v = static_cast<std::uint8_t>(1 - v);
        EXPECT_NEAR(stats::cochran_q(blocks).statistic, q, 1e-12);
    }
}

TEST(CochranQ, DegenerateInput) {
    EXPECT_THROW(stats::cochran_q({{1, 0}, {0}}), DegenerateInput);
    EXPECT_THROW(stats::cochran_q({{1, 2}}), DegenerateInput);
    EXPECT_THROW(stats::cochran_q({}), DegenerateInput);
    EXPECT_THROW(stats::cochran_q({{1}}), DegenerateInput);
}

TEST(Ols, MatchesOracle) {
    for (const auto &c : fixtures::kOls) {
        const auto fit = stats::ols(c.y, c.x);
        const std::size_t k = fit.coefficients.size();
        for (std::size_t j = 0; j < k; ++j) {
            EXPECT_TRUE(close(fit.coefficients[j], c.params[j], 1e-9));
        }
        EXPECT_TRUE(close(fit.intercept, c.params[k], 1e-9));
        for (std::size_t j = 0; j <= k; ++j) {
            EXPECT_TRUE(close(fit.ci95[j].first, c.lo[j], 1e-9));
            EXPECT_TRUE(close(fit.ci95[j].second, c.hi[j], 1e-9));
        }
        EXPECT_TRUE(close(fit.residual_variance, c.sigma2, 1e-9));
    }
}

TEST(Ols, SatisfiesNormalEquations) {
    for (const auto &c : fixtures::kOls) {
        const auto fit = stats::ols(c.y, c.x);
        const std::size_t k = fit.coefficients.size();
        std::vector<double> resid(c.y.size());
        double ynorm = 0.0;
        for (std::size_t i = 0; i < c.y.size(); ++i) {
            double f = fit.intercept;
            for (std::size_t j = 0; j < k; ++j) f += fit.coefficients[j] * c.x[i][j];
            resid[i] = c.y[i] - f;
            ynorm += c.y[i] * c.y[i];
        }
        for (std::size_t j = 0; j <= k; ++j) {
            double dot = 0.0;
            for (std::size_t i = 0; i < c.y.size(); ++i) dot += resid[i] * (j < k ? c.x[i][j] : 1.0);
            EXPECT_LE(std::fabs(dot), 1e-10 * std::max(1.0, ynorm));
        }
    }
}

TEST(Ols, ExactAndConstantResponses) {
    const std::vector<std::vector<double>> x{{0}, {1}, {1}, {0}, {1}};
    const auto exact = stats::ols(std::vector<double>{0, 1, 1, 0, 1}, x);
    EXPECT_NEAR(exact.coefficients[0], 1.0, 1e-12);
    EXPECT_NEAR(exact.intercept, 0.0, 1e-12);
    EXPECT_NEAR(exact.residual_variance, 0.0, 1e-20);

    const auto flat = stats::ols(std::vector<double>{0.4, 0.4, 0.4, 0.4, 0.4}, x);
    EXPECT_NEAR(flat.coefficients[0], 0.0, 1e-12);
    EXPECT_NEAR(flat.intercept, 0.4, 1e-12);
}

TEST(Ols, CiIsSymmetric) {
    const auto fit = stats::ols(fixtures::kOls[2].y, fixtures::kOls[2].x);
    for (std::size_t j = 0; j < fit.ci95.size(); ++j) {
        const double est = j < fit.coefficients.size() ? fit.coefficients[j] : fit.intercept;
        EXPECT_NEAR(est - fit.ci95[j].first, fit.ci95[j].second - est, 1e-12);
    }
}

TEST(Ols, RankDeficient) {
    const std::vector<std::vector<double>> dup{{0, 0}, {1, 1}, {1, 1}, {0, 0}, {1, 1}};
    EXPECT_THROW(stats::ols(std::vector<double>{0, 1, 0, 1, 1}, dup), RankDeficient);
    const std::vector<std::vector<double>> constant{{1}, {1}, {1}, {1}};
    EXPECT_THROW(stats::ols(std::vector<double>{0, 1, 0, 1}, constant), RankDeficient);
    const std::vector<std::vector<double>> tiny{{0}, {1}};
    EXPECT_THROW(stats::ols(std::vector<double>{0, 1}, tiny), RankDeficient);
}
