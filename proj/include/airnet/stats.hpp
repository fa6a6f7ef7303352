#ifndef AIRNET_STATS_HPP
#define AIRNET_STATS_HPP

#include <vector>

namespace airnet {

struct TTestResult {
    double t = 0.0;
    int df = 0;
    double p = 1.0; // two-sided
};

/// Classic Student's t on paired differences; throws on length mismatch,
/// n < 2, or zero variance.
TTestResult ttest_paired(const std::vector<double>& a, const std::vector<double>& b);

/// Pooled equal-variance two-sample t; throws when either sample has fewer
/// than 2 values or the pooled variance vanishes.
TTestResult ttest_unpaired(const std::vector<double>& a, const std::vector<double>& b);

/// Two-sided p for a t statistic via the regularized incomplete beta
/// (continued fraction); absolute error below 1e-6.
double student_t_two_sided_p(double t, int df);

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

} // namespace airnet

#endif
