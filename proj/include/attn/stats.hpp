#pragma once

#include <optional>
#include <string>
#include <vector>

namespace attn {

enum class TestKind { shapiro_wilk, t_ind, t_paired, mann_whitney, pearson };

struct TestResult {
    double statistic = 0.0;
    std::optional<double> df;
    double p_value = 1.0;
    TestKind kind = TestKind::t_ind;
};

// Regularized incomplete beta I_x(a,b) and the two-tailed Student-t p-value;
// exposed because several tests share them.
double incomplete_beta(double a, double b, double x);
double t_two_tailed_p(double t, double df);
double normal_cdf(double z);

// W statistic and p-value via Royston's AS R94 approximation; 3 <= n <= 5000.
TestResult shapiro_wilk(const std::vector<double>& sample);

// Two-tailed pooled-variance t-test, df = n_a + n_b - 2.
TestResult t_test_ind(const std::vector<double>& a, const std::vector<double>& b);

// Two-tailed paired t-test on differences, df = n - 1.
TestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// U with midrank ties. Exact two-tailed p by rank-sum enumeration when
// n_a + n_b <= 20 and there are no ties, otherwise normal approximation with
// tie and continuity corrections.
TestResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

// r plus two-tailed p from the t-transform with df = n - 2.
TestResult pearson(const std::vector<double>& a, const std::vector<double>& b);

struct StatsRow {
    std::string metric, condition_a, condition_b, test;
    double statistic = 0.0;
    std::optional<double> df;
    double p = 1.0;
};

void write_stats_csv(const std::vector<StatsRow>& rows, const std::string& path);

}  // namespace attn
