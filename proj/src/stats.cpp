#include "reflcausal/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "reflcausal/errors.hpp"
#include "reflcausal/special_functions.hpp"

namespace reflcausal::stats {

namespace {

void check_groups(const Groups &groups) {
    if (groups.size() < 2) throw DegenerateGroup("need at least two groups");
    for (const auto &g : groups) {
        if (g.size() < 2) throw DegenerateGroup("every group needs at least two observations");
    }
}

struct OneWay {
    double ss_between = 0.0;
    double ss_within = 0.0;
    double df_between = 0.0;
    double df_within = 0.0;
};

OneWay one_way_sums(const Groups &groups) {
    std::size_t total = 0;
    double grand_sum = 0.0;
    for (const auto &g : groups) {
        total += g.size();
        grand_sum += std::accumulate(g.begin(), g.end(), 0.0);
    }
    const double grand = grand_sum / static_cast<double>(total);
    OneWay s;
    for (const auto &g : groups) {
        const double m = mean(g);
        s.ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double v : g) s.ss_within += (v - m) * (v - m);
    }
    s.df_between = static_cast<double>(groups.size() - 1);
    s.df_within = static_cast<double>(total - groups.size());
    return s;
}

TestResult f_test(const OneWay &s) {
    TestResult r;
    r.df1 = s.df_between;
    r.df2 = s.df_within;
    // Relative guard: sums that are pure rounding noise count as zero.
    const double scale = std::max(1.0, s.ss_between + s.ss_within);
    if (s.ss_between <= 1e-14 * scale) {
        r.statistic = 0.0;
        r.p_value = 1.0;
        r.effect_size = 0.0;
        return r;
    }
    if (s.ss_within <= 0.0) {
        r.statistic = std::numeric_limits<double>::infinity();
        r.p_value = 0.0;
        r.effect_size = 1.0;
        return r;
    }
    r.statistic = (s.ss_between / s.df_between) / (s.ss_within / s.df_within);
    r.p_value = special::f_sf(r.statistic, s.df_between, s.df_within);
    r.effect_size = s.ss_between / (s.ss_between + s.ss_within);
    return r;
}

} // namespace

double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double v : xs) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double partial_eta_squared(double f, double df_between, double df_within) {
    if (f < 0.0 || df_between <= 0.0 || df_within <= 0.0) {
        throw DomainError("partial eta-squared needs F >= 0 and positive df");
    }
    return (f * df_between) / (f * df_between + df_within);
}

TestResult levene(const Groups &groups) {
    check_groups(groups);
    Groups deviations;
    deviations.reserve(groups.size());
    for (const auto &g : groups) {
        const double m = mean(g);
        std::vector<double> d;
        d.reserve(g.size());
        for (double v : g) d.push_back(std::fabs(v - m));
        deviations.push_back(std::move(d));
    }
    TestResult r = f_test(one_way_sums(deviations));
    r.effect_size.reset();
    return r;
}

TestResult anova_oneway(const Groups &groups) {
    check_groups(groups);
    return f_test(one_way_sums(groups));
}

TestResult cochran_q(const std::vector<std::vector<std::uint8_t>> &blocks) {
    if (blocks.empty()) throw DegenerateInput("Cochran's Q needs at least one block");
    const std::size_t k = blocks.front().size();
    if (k < 2) throw DegenerateInput("Cochran's Q needs at least two treatments");
    std::vector<double> col(k, 0.0);
    double sum_r = 0.0;
    double sum_r2 = 0.0;
    for (const auto &row : blocks) {
        if (row.size() != k) throw DegenerateInput("ragged Cochran's Q matrix");
        double r = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (row[j] > 1) throw DegenerateInput("Cochran's Q entries must be 0 or 1");
            col[j] += row[j];
            r += row[j];
        }
        sum_r += r;
        sum_r2 += r * r;
    }
    const double kd = static_cast<double>(k);
    const double denom = kd * sum_r - sum_r2;
    TestResult t;
    t.df1 = kd - 1.0;
    if (denom <= 0.0) {
        // Every block is constant, so every column total is equal too.
        t.statistic = 0.0;
        t.p_value = 1.0;
        t.effect_size = 0.0;
        return t;
    }
    const double cbar = sum_r / kd;
    double dev = 0.0;
    for (double c : col) dev += (c - cbar) * (c - cbar);
    t.statistic = kd * (kd - 1.0) * dev / denom;
    t.p_value = special::chi2_sf(t.statistic, kd - 1.0);
    t.effect_size = t.statistic / (static_cast<double>(blocks.size()) * (kd - 1.0));
    return t;
}

OlsFit ols(std::span<const double> y, const std::vector<std::vector<double>> &predictors) {
    const std::size_t n = y.size();
    if (predictors.size() != n) throw RankDeficient("predictor rows do not match response length");
    const std::size_t k = n == 0 ? 0 : predictors.front().size();
    const std::size_t p = k + 1;
    if (n <= p) throw RankDeficient("OLS needs more rows than parameters");

    // Column-major design with the intercept last.
    std::vector<double> a(n * p);
    for (std::size_t i = 0; i < n; ++i) {
        if (predictors[i].size() != k) throw RankDeficient("ragged predictor matrix");
        for (std::size_t j = 0; j < k; ++j) a[j * n + i] = predictors[i][j];
        a[k * n + i] = 1.0;
    }
    std::vector<double> qty(y.begin(), y.end());
    std::vector<double> col_norm(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += a[j * n + i] * a[j * n + i];
        col_norm[j] = std::sqrt(s);
    }

    // Householder QR, applying each reflector to the remaining columns and to y.
    for (std::size_t j = 0; j < p; ++j) {
        double norm = 0.0;
        for (std::size_t i = j; i < n; ++i) norm += a[j * n + i] * a[j * n + i];
        norm = std::sqrt(norm);
        if (norm <= 1e-12 * std::max(col_norm[j], 1e-300)) {
            throw RankDeficient("design matrix is rank deficient");
        }
        const double alpha = a[j * n + j] > 0.0 ? -norm : norm;
        std::vector<double> v(n - j);
        for (std::size_t i = j; i < n; ++i) v[i - j] = a[j * n + i];
        v[0] -= alpha;
        double vnorm2 = 0.0;
        for (double e : v) vnorm2 += e * e;
        auto reflect = [&](double *col) {
            double dot = 0.0;
            for (std::size_t i = j; i < n; ++i) dot += v[i - j] * col[i];
            const double scale = 2.0 * dot / vnorm2;
            for (std::size_t i = j; i < n; ++i) col[i] -= scale * v[i - j];
        };
        for (std::size_t c = j; c < p; ++c) reflect(&a[c * n]);
        reflect(qty.data());
    }

    // Back substitution R beta = (Q^T y)[0:p].
    std::vector<double> beta(p);
    for (std::size_t jj = p; jj-- > 0;) {
        double s = qty[jj];
        for (std::size_t c = jj + 1; c < p; ++c) s -= a[c * n + jj] * beta[c];
        beta[jj] = s / a[jj * n + jj];
    }

    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double fitted = beta[k];
        for (std::size_t j = 0; j < k; ++j) fitted += predictors[i][j] * beta[j];
        rss += (y[i] - fitted) * (y[i] - fitted);
    }

    // diag((X^T X)^-1) = row sums of squares of R^-1.
    std::vector<double> rinv(p * p, 0.0); // column-major, upper triangular
    for (std::size_t c = 0; c < p; ++c) {
        rinv[c * p + c] = 1.0 / a[c * n + c];
        for (std::size_t r = c; r-- > 0;) {
            double s = 0.0;
            for (std::size_t m = r + 1; m <= c; ++m) s += a[m * n + r] * rinv[c * p + m];
            rinv[c * p + r] = -s / a[r * n + r];
        }
    }

    OlsFit fit;
    fit.df_residual = n - p;
    fit.residual_variance = rss / static_cast<double>(fit.df_residual);
    const double tcrit = special::t_quantile(0.975, static_cast<double>(fit.df_residual));
    fit.coefficients.assign(beta.begin(), beta.begin() + static_cast<std::ptrdiff_t>(k));
    fit.intercept = beta[k];
    for (std::size_t r = 0; r < p; ++r) {
        double d = 0.0;
        for (std::size_t c = r; c < p; ++c) d += rinv[c * p + r] * rinv[c * p + r];
        const double se = std::sqrt(fit.residual_variance * d);
        fit.std_errors.push_back(se);
        fit.ci95.emplace_back(beta[r] - tcrit * se, beta[r] + tcrit * se);
    }
    return fit;
}

} // namespace reflcausal::stats
