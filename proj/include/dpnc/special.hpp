#pragma once

#include <span>

namespace dpnc {

/// log Gamma(x) for x > 0 via the Lanczos approximation (g = 7, 9 terms).
double log_gamma(double x);

/// Log density of a Student-t with `df` degrees of freedom, location `loc`
/// and squared scale `scale2`.
double student_t_logpdf(double x, double df, double loc, double scale2);

/// log(sum(exp(v))); returns -inf for an empty span or all -inf entries.
double log_sum_exp(std::span<const double> v);

}  // namespace dpnc
