#include "attn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace attn {

namespace {

double betacf(double a, double b, double x) {
    const int kMaxIter = 300;
    const double kEps = 3e-14, kFpMin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

// Acklam's rational approximation of the inverse normal CDF.
double inv_normal_cdf(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double q, r, x;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= phigh) {
        q = p - 0.5;
        r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    return x;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sum_sq_dev(const std::vector<double>& v, double m) {
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s;
}

std::vector<double> midranks(const std::vector<double>& pooled_sorted,
                             const std::vector<double>& values) {
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto lo = std::lower_bound(pooled_sorted.begin(), pooled_sorted.end(), values[i]);
        auto hi = std::upper_bound(pooled_sorted.begin(), pooled_sorted.end(), values[i]);
        double first = static_cast<double>(lo - pooled_sorted.begin()) + 1.0;
        double last = static_cast<double>(hi - pooled_sorted.begin());
        ranks[i] = (first + last) / 2.0;
    }
    return ranks;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - ln_beta);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double t_two_tailed_p(double t, double df) {
    double x = df / (df + t * t);
    // P(|T| >= t) = I_x(df/2, 1/2)
    double p = incomplete_beta(df / 2.0, 0.5, x);
    return std::min(1.0, std::max(0.0, p));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

TestResult shapiro_wilk(const std::vector<double>& sample) {
    const int n = static_cast<int>(sample.size());
    if (n < 3 || n > 5000) throw std::invalid_argument("shapiro_wilk requires 3 <= n <= 5000");
    std::vector<double> x(sample);
    std::sort(x.begin(), x.end());
    if (x.front() == x.back())
        throw std::invalid_argument("shapiro_wilk undefined for an all-identical sample");

    // Blom scores and Royston's polynomial-corrected weights (AS R94).
    std::vector<double> m(n);
    double ssumm2 = 0.0;
    for (int i = 0; i < n; ++i) {
        m[i] = inv_normal_cdf((i + 1 - 0.375) / (n + 0.25));
        ssumm2 += m[i] * m[i];
    }
    std::vector<double> a(n, 0.0);
    double rsn = 1.0 / std::sqrt(static_cast<double>(n));
    if (n == 3) {
        a[0] = -std::sqrt(0.5);
        a[2] = std::sqrt(0.5);
    } else {
        double an = -2.706056 * std::pow(rsn, 5) + 4.434685 * std::pow(rsn, 4) -
                    2.071190 * std::pow(rsn, 3) - 0.147981 * rsn * rsn + 0.221157 * rsn +
                    m[n - 1] / std::sqrt(ssumm2);
        double phi;
        if (n > 5) {
            double an1 = -3.582633 * std::pow(rsn, 5) + 5.682633 * std::pow(rsn, 4) -
                         1.752461 * std::pow(rsn, 3) - 0.293762 * rsn * rsn + 0.042981 * rsn +
                         m[n - 2] / std::sqrt(ssumm2);
            phi = (ssumm2 - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
                  (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
            a[n - 1] = an;
            a[0] = -an;
            a[n - 2] = an1;
            a[1] = -an1;
            for (int i = 2; i < n - 2; ++i) a[i] = m[i] / std::sqrt(phi);
        } else {
            phi = (ssumm2 - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
            a[n - 1] = an;
            a[0] = -an;
            for (int i = 1; i < n - 1; ++i) a[i] = m[i] / std::sqrt(phi);
        }
    }

    double xbar = mean_of(x);
    double ssq = sum_sq_dev(x, xbar);
    double num = 0.0;
    for (int i = 0; i < n; ++i) num += a[i] * x[i];
    double w = num * num / ssq;
    w = std::min(1.0, w);

    double p;
    if (n == 3) {
        const double pi6 = 6.0 / 3.14159265358979323846;
        const double stqr = std::asin(std::sqrt(0.75));
        p = pi6 * (std::asin(std::sqrt(w)) - stqr);
        p = std::min(1.0, std::max(0.0, p));
    } else if (n <= 11) {
        double gamma = -2.273 + 0.459 * n;
        double wln = -std::log(gamma - std::log1p(-w));
        double mu = 0.5440 - 0.39978 * n + 0.025054 * n * n - 0.0006714 * n * n * n;
        double sigma = std::exp(1.3822 - 0.77857 * n + 0.062767 * n * n - 0.0020322 * n * n * n);
        p = 1.0 - normal_cdf((wln - mu) / sigma);
    } else {
        double ln_n = std::log(static_cast<double>(n));
        double wln = std::log1p(-w);
        double mu = -1.5861 - 0.31082 * ln_n - 0.083751 * ln_n * ln_n +
                    0.0038915 * ln_n * ln_n * ln_n;
        double sigma = std::exp(-0.4803 - 0.082676 * ln_n + 0.0030302 * ln_n * ln_n);
        p = 1.0 - normal_cdf((wln - mu) / sigma);
    }
    return {w, std::nullopt, p, TestKind::shapiro_wilk};
}

TestResult t_test_ind(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t na = a.size(), nb = b.size();
    if (na < 2 || nb < 2) throw std::invalid_argument("t_test_ind requires n >= 2 per group");
    double ma = mean_of(a), mb = mean_of(b);
    double sp2 = (sum_sq_dev(a, ma) + sum_sq_dev(b, mb)) / static_cast<double>(na + nb - 2);
    if (sp2 <= 0.0) throw std::invalid_argument("t_test_ind undefined for zero pooled variance");
    double se = std::sqrt(sp2 * (1.0 / na + 1.0 / nb));
    double t = (ma - mb) / se;
    double df = static_cast<double>(na + nb - 2);
    return {t, df, t_two_tailed_p(t, df), TestKind::t_ind};
}

TestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("paired_t_test requires equal lengths >= 2");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    double md = mean_of(d);
    double ss = sum_sq_dev(d, md);
    if (ss <= 0.0)
        throw std::invalid_argument("paired_t_test undefined for identical differences");
    double n = static_cast<double>(d.size());
    double t = md / std::sqrt(ss / (n - 1.0) / n);
    double df = n - 1.0;
    return {t, df, t_two_tailed_p(t, df), TestKind::t_paired};
}

TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t na = a.size(), nb = b.size();
    if (na < 1 || nb < 1) throw std::invalid_argument("mann_whitney_u requires nonempty samples");
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());
    bool has_ties = std::adjacent_find(pooled.begin(), pooled.end()) != pooled.end();

    auto ra = midranks(pooled, a);
    double rank_sum_a = 0.0;
    for (double r : ra) rank_sum_a += r;
    double u = rank_sum_a - static_cast<double>(na) * (na + 1) / 2.0;
    const double u_max = static_cast<double>(na) * static_cast<double>(nb);

    double p;
    if (na + nb <= 20 && !has_ties) {
        // Exact: rank-sum distribution by subset-sum counting.
        const int n = static_cast<int>(na + nb);
        const int k = static_cast<int>(na);
        const int max_w = n * (n + 1) / 2;
        std::vector<std::vector<double>> dp(k + 1, std::vector<double>(max_w + 1, 0.0));
        dp[0][0] = 1.0;
        for (int r = 1; r <= n; ++r)
            for (int kk = std::min(k, r); kk >= 1; --kk)
                for (int w = max_w; w >= r; --w)
                    if (dp[kk - 1][w - r] > 0.0) dp[kk][w] += dp[kk - 1][w - r];
        double total = 0.0;
        for (int w = 0; w <= max_w; ++w) total += dp[k][w];
        const int base = k * (k + 1) / 2;
        int ui = static_cast<int>(std::lround(u));
        int lo = std::min(ui, static_cast<int>(std::lround(u_max)) - ui);
        int hi = static_cast<int>(std::lround(u_max)) - lo;
        double mass = 0.0;
        for (int uu = 0; uu <= static_cast<int>(u_max); ++uu) {
            if (uu <= lo || uu >= hi) {
                int w = uu + base;
                if (w <= max_w) mass += dp[k][w];
            }
        }
        p = std::min(1.0, mass / total);
    } else {
        const double n = static_cast<double>(na + nb);
        double tie_term = 0.0;
        for (std::size_t i = 0; i < pooled.size();) {
            std::size_t j = i;
            while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
            double t = static_cast<double>(j - i);
            tie_term += t * t * t - t;
            i = j;
        }
        double var = u_max / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
        if (var <= 0.0) return {u, std::nullopt, 1.0, TestKind::mann_whitney};
        double mu = u_max / 2.0;
        double z = (u - mu);
        z -= (z > 0 ? 0.5 : (z < 0 ? -0.5 : 0.0));  // continuity correction
        z /= std::sqrt(var);
        p = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::fabs(z))));
    }
    return {u, std::nullopt, p, TestKind::mann_whitney};
}

TestResult pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 3)
        throw std::invalid_argument("pearson requires equal lengths >= 3");
    double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0)
        throw std::invalid_argument("pearson undefined for zero-variance input");
    double r = sab / std::sqrt(saa * sbb);
    r = std::max(-1.0, std::min(1.0, r));
    double df = static_cast<double>(a.size()) - 2.0;
    double p;
    if (std::fabs(r) >= 1.0) {
        p = 0.0;
    } else {
        double t = r * std::sqrt(df / (1.0 - r * r));
        p = t_two_tailed_p(t, df);
    }
    return {r, df, p, TestKind::pearson};
}

void write_stats_csv(const std::vector<StatsRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write stats csv: " + path);
    out << "metric,condition_a,condition_b,test,statistic,df,p\n";
    char line[256];
    for (const StatsRow& r : rows) {
        char dfbuf[32];
        dfbuf[0] = '\0';
        if (r.df) std::snprintf(dfbuf, sizeof(dfbuf), "%.1f", *r.df);
        std::snprintf(line, sizeof(line), "%s,%s,%s,%s,%.6f,%s,%.6g\n", r.metric.c_str(),
                      r.condition_a.c_str(), r.condition_b.c_str(), r.test.c_str(), r.statistic,
                      dfbuf, r.p);
        out << line;
    }
}

}  // namespace attn
