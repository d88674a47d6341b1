#include "reflcausal/special_functions.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "reflcausal/errors.hpp"

namespace reflcausal::special {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 100000;

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw DomainError("incomplete beta continued fraction did not converge");
}

double gamma_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) {
            return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
        }
    }
    throw DomainError("incomplete gamma series did not converge");
}

double gamma_continued_fraction(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) {
            return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
        }
    }
    throw DomainError("incomplete gamma continued fraction did not converge");
}

void require_positive(double v, const char *what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw DomainError(std::string(what) + " must be positive and finite");
    }
}

} // namespace

double log_gamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw DomainError("log_gamma requires x > 0, got " + std::to_string(x));
    }
    return std::lgamma(x);
}

double inc_beta(double a, double b, double x) {
    require_positive(a, "a");
    require_positive(b, "b");
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("inc_beta requires x in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = a * std::log(x) + b * std::log1p(-x) - log_gamma(a) - log_gamma(b) +
                             log_gamma(a + b);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double inc_gamma_p(double a, double x) {
    require_positive(a, "a");
    if (!(x >= 0.0)) throw DomainError("inc_gamma requires x >= 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_series(a, x);
    return 1.0 - gamma_continued_fraction(a, x);
}

double inc_gamma_q(double a, double x) {
    require_positive(a, "a");
    if (!(x >= 0.0)) throw DomainError("inc_gamma requires x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_series(a, x);
    return gamma_continued_fraction(a, x);
}

double f_sf(double x, double d1, double d2) {
    if (!(d1 >= 1.0) || !(d2 >= 1.0)) throw DomainError("F distribution needs d1, d2 >= 1");
    if (std::isnan(x)) throw DomainError("F statistic is NaN");
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x));
}

double chi2_sf(double x, double df) {
    if (!(df >= 1.0)) throw DomainError("chi-squared distribution needs df >= 1");
    if (std::isnan(x)) throw DomainError("chi-squared statistic is NaN");
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return inc_gamma_q(df / 2.0, x / 2.0);
}

double t_two_sided_p(double t, double df) {
    require_positive(df, "df");
    if (std::isinf(t)) return 0.0;
    return inc_beta(df / 2.0, 0.5, df / (df + t * t));
}

double t_quantile(double prob, double df) {
    require_positive(df, "df");
    if (!(prob > 0.0 && prob < 1.0)) throw DomainError("t_quantile requires prob in (0, 1)");
    if (prob == 0.5) return 0.0;
    const bool upper = prob > 0.5;
    // tail = P(T > q) for the positive quantile q we solve for.
    const double tail = upper ? 1.0 - prob : prob;
    auto upper_tail = [df](double t) { return 0.5 * t_two_sided_p(t, df); };
    double lo = 0.0;
    double hi = 1.0;
    while (upper_tail(hi) > tail) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) throw DomainError("t_quantile bracket overflow");
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (upper_tail(mid) > tail) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double q = 0.5 * (lo + hi);
    return upper ? q : -q;
}

} // namespace reflcausal::special
