#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace reflcausal::stats {

/// Outcome of a hypothesis test. `df2` is absent for single-df tests
/// (chi-squared based).
struct TestResult {
    double statistic = 0.0;
    double df1 = 0.0;
    std::optional<double> df2;
    double p_value = 1.0;
    std::optional<double> effect_size;
};

using Groups = std::vector<std::vector<double>>;

/// Partial eta-squared recovered from an F statistic and its degrees of freedom.
double partial_eta_squared(double f, double df_between, double df_within);

/// Levene's test for equal variances with mean-centred absolute deviations.
/// Requires >= 2 groups of >= 2 observations each (DegenerateGroup otherwise).
/// When every deviation equals its group mean the statistic is 0 (p = 1).
TestResult levene(const Groups &groups);

/// One-way ANOVA; effect_size holds partial eta-squared SS_b / (SS_b + SS_w).
/// A zero between-group sum of squares yields F = 0, p = 1, eta = 0 even if
/// the within-group sum is also zero.
TestResult anova_oneway(const Groups &groups);

/// Cochran's Q over an N x k binary matrix (blocks are rows, treatments are
/// columns). effect_size = Q / (N (k - 1)). When every row is constant the
/// formula is 0/0; all column totals are then equal and Q = 0, p = 1 is
/// returned. Throws DegenerateInput for empty, ragged or non-binary input.
TestResult cochran_q(const std::vector<std::vector<std::uint8_t>> &blocks);

struct OlsFit {
    std::vector<double> coefficients;
    double intercept = 0.0;
    /// 95% two-sided t intervals; slopes first, intercept last.
    std::vector<std::pair<double, double>> ci95;
    std::vector<double> std_errors;
    double residual_variance = 0.0;
    std::size_t df_residual = 0;
};

/// Ordinary least squares of y on the columns of `predictors` plus an
/// intercept, solved with Householder QR. predictors is row-major with one
/// row per observation. Throws RankDeficient when the design is singular or
/// has no residual degrees of freedom.
OlsFit ols(std::span<const double> y, const std::vector<std::vector<double>> &predictors);

/// Sample mean and unbiased standard deviation (0 for fewer than 2 values).
double mean(std::span<const double> xs);
double sample_std(std::span<const double> xs);

} // namespace reflcausal::stats
