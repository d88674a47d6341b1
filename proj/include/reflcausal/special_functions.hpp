#pragma once

namespace reflcausal::special {

/// Natural log of the Gamma function for x > 0. Throws DomainError otherwise.
double log_gamma(double x);

/// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0, 1].
double inc_beta(double a, double b, double x);

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double inc_gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed
/// without cancellation in the upper tail.
double inc_gamma_q(double a, double x);

/// Survival function of the F distribution with (d1, d2) degrees of freedom.
double f_sf(double x, double d1, double d2);

/// Survival function of the chi-squared distribution.
double chi2_sf(double x, double df);

/// Two-sided p-value P(|T| > |t|) for Student's t with df degrees of freedom.
double t_two_sided_p(double t, double df);

/// Quantile of Student's t: returns q with P(T <= q) = prob, prob in (0, 1).
double t_quantile(double prob, double df);

} // namespace reflcausal::special
