#include "airnet/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace airnet {

namespace {

// modified Lentz continued fraction for the incomplete beta
double betacf(double a, double b, double x) {
    const double tiny = 1e-30;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-12) return h;
    }
    throw std::runtime_error("betacf: continued fraction failed to converge");
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v, double m) {
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log(1.0 - x);
    const double bt = std::exp(lbt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int df) {
    if (df < 1) throw std::invalid_argument("student_t_two_sided_p: df must be >= 1");
    const double x = df / (df + t * t);
    return regularized_incomplete_beta(df / 2.0, 0.5, x);
}

TTestResult ttest_paired(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("ttest_paired: samples must have equal length");
    if (a.size() < 2) throw std::invalid_argument("ttest_paired: need at least 2 pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double m = mean(d);
    const double var = sample_var(d, m);
    if (!(var > 0.0))
        throw std::runtime_error("ttest_paired: zero variance of the differences");
    const int n = static_cast<int>(d.size());
    TTestResult r;
    r.t = m / std::sqrt(var / n);
    r.df = n - 1;
    r.p = student_t_two_sided_p(r.t, r.df);
    return r;
}

TTestResult ttest_unpaired(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("ttest_unpaired: each sample needs at least 2 values");
    const double ma = mean(a), mb = mean(b);
    const double va = sample_var(a, ma), vb = sample_var(b, mb);
    const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
    const double pooled =
        ((na - 1) * va + (nb - 1) * vb) / static_cast<double>(na + nb - 2);
    if (!(pooled > 0.0)) throw std::runtime_error("ttest_unpaired: zero pooled variance");
    TTestResult r;
    r.t = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    r.df = na + nb - 2;
    r.p = student_t_two_sided_p(r.t, r.df);
    return r;
}

} // namespace airnet
