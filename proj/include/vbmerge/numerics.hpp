#pragma once

#include <span>

namespace vbmerge::numerics {

/// Digamma function psi(x) = d/dx log Gamma(x), for x > 0.
///
/// Shifts x upward with psi(x) = psi(x + 1) - 1/x until the asymptotic
/// series is accurate, then evaluates the series. Absolute error is below
/// 1e-12 for x >= 1e-3. Throws DomainError for x <= 0 or NaN.
double digamma(double x);

/// Trigamma function psi_1(x) = d^2/dx^2 log Gamma(x), for x > 0.
/// Relative error below 1e-10 for x >= 1e-3. Throws DomainError for x <= 0.
double trigamma(double x);

/// log(sum(exp(values))) evaluated with a max shift. Entries may be -inf.
/// Throws ArgumentError on empty input.
double log_sum_exp(std::span<const double> values);

/// log of the multivariate beta function, sum(lgamma(a)) - lgamma(sum(a)).
double log_multivariate_beta(std::span<const double> alpha);

}  // namespace vbmerge::numerics
